/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_eyeframe_free: (a: number, b: number) => void;
export const circleFits: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const eyeFrame: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const eyeframe_height: (a: number) => number;
export const eyeframe_json: (a: number) => [number, number];
export const eyeframe_rgba: (a: number) => [number, number];
export const eyeframe_width: (a: number) => number;
export const gazeCurve: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
