/* tslint:disable */
/* eslint-disable */

/**
 * A rendered synthetic eye with the detector's stages drawn on it.
 */
export class EyeFrame {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    height(): number;
    /**
     * `{result, truth, error}`: the frame result, the renderer's ground
     * truth and the center/radius errors in pixels.
     */
    json(): string;
    /**
     * Overlay pixels, RGBA.
     */
    rgba(): Uint8Array;
    width(): number;
}

export function circleFits(xs: Float64Array, ys: Float64Array): string;

export function eyeFrame(iris_x: number, iris_y: number, coverage: number, noise: number, seed: number): EyeFrame;

export function gazeCurve(r_ball: number, d: number, steps: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_eyeframe_free: (a: number, b: number) => void;
    readonly circleFits: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly eyeFrame: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly eyeframe_height: (a: number) => number;
    readonly eyeframe_json: (a: number) => [number, number];
    readonly eyeframe_rgba: (a: number) => [number, number];
    readonly eyeframe_width: (a: number) => number;
    readonly gazeCurve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
