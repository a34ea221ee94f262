//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested natively. Results cross the boundary as JSON strings and raw RGBA
//! bytes.

use gazetrack::gaze::{delta_from_gaze, gaze_from_delta};
use gazetrack::geometry::Point;
use gazetrack::iris::{double_circle_fit, fit_circle_algebraic, Circle};
use gazetrack::overlay;
use gazetrack::pipeline::process_frame_detailed;
use gazetrack::synth::GroundTruth;
use gazetrack::{render, EyeballModel, PipelineConfig, SyntheticEyeSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// A rendered synthetic eye with the detector's stages drawn on it.
#[wasm_bindgen]
pub struct EyeFrame {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    json: String,
}

#[wasm_bindgen]
impl EyeFrame {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Overlay pixels, RGBA.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// `{result, truth, error}`: the frame result, the renderer's ground
    /// truth and the center/radius errors in pixels.
    pub fn json(&self) -> String {
        self.json.clone()
    }
}

#[derive(Serialize)]
struct CircleJson {
    cx: f64,
    cy: f64,
    r: f64,
}

impl From<Circle> for CircleJson {
    fn from(c: Circle) -> Self {
        Self {
            cx: c.a,
            cy: c.b,
            r: c.r,
        }
    }
}

#[derive(Serialize)]
struct TruthJson {
    iris: CircleJson,
    corner: Point,
}

#[derive(Serialize)]
struct ErrorJson {
    center_px: f64,
    radius_px: f64,
    corner_px: Option<f64>,
}

/// Renders an eye with the iris at (`iris_x`, `iris_y`) and runs the
/// pipeline on it.
pub fn eye_frame(iris_x: f64, iris_y: f64, coverage: f64, noise: f64, seed: u64) -> Result<EyeFrame, String> {
    let spec = SyntheticEyeSpec {
        iris_center: Point::new(iris_x, iris_y),
        eyelid_coverage: coverage,
        noise_sigma: noise,
        seed,
        ..Default::default()
    };
    let (img, truth): (_, GroundTruth) = render(&spec).map_err(|e| e.to_string())?;
    let (result, det) = process_frame_detailed(&img, None, &PipelineConfig::default());
    let canvas = overlay::draw(&img, &det);
    let error = result.iris.map(|c| ErrorJson {
        center_px: c.center().distance(&truth.iris.center()),
        radius_px: (c.r - truth.iris.r).abs(),
        corner_px: result.corner.map(|k| k.point().distance(&truth.corner_temporal)),
    });
    let json = serde_json::json!({
        "result": serde_json::to_value(&result).map_err(|e| e.to_string())?,
        "truth": TruthJson { iris: truth.iris.into(), corner: truth.corner_temporal },
        "error": error,
    });
    Ok(EyeFrame {
        width: canvas.width,
        height: canvas.height,
        rgba: canvas.to_rgba(),
        json: json.to_string(),
    })
}

#[derive(Serialize)]
struct FitsJson {
    algebraic: CircleJson,
    first: CircleJson,
    refit: CircleJson,
    /// Indices of the points the double fit rejected.
    rejected: Vec<usize>,
}

/// Algebraic fit and double circle fit of the points `xs[i], ys[i]`.
pub fn circle_fits(xs: &[f64], ys: &[f64]) -> Result<String, String> {
    if xs.len() != ys.len() {
        return Err("xs and ys differ in length".into());
    }
    let pts: Vec<Point> = xs.iter().zip(ys).map(|(&x, &y)| Point::new(x, y)).collect();
    let algebraic = fit_circle_algebraic(&pts).map_err(|e| e.to_string())?;
    let double = double_circle_fit(&pts).map_err(|e| e.to_string())?;
    let rejected = pts
        .iter()
        .enumerate()
        .filter(|(_, p)| double.outliers.contains(p))
        .map(|(i, _)| i)
        .collect();
    let out = FitsJson {
        algebraic: algebraic.into(),
        first: double.first.into(),
        refit: double.circle.into(),
        rejected,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CurvePoint {
    delta_mm: f64,
    theta_deg: f64,
    gaze_mm: f64,
    /// Iris displacement recovered from `gaze_mm`, as a round-trip check.
    back_mm: f64,
}

/// Screen displacement against iris displacement for an eyeball of radius
/// `r_ball` at distance `d`, sampled at `steps` points up to 0.95 r_ball.
pub fn gaze_curve(r_ball: f64, d: f64, steps: usize) -> Result<String, String> {
    let model = EyeballModel {
        r_ball,
        d,
        ..Default::default()
    };
    model.validate().map_err(|e| e.to_string())?;
    let n = steps.clamp(2, 2000);
    let limit = 0.95 * r_ball;
    let points: Vec<CurvePoint> = (0..n)
        .map(|i| {
            let delta = -limit + 2.0 * limit * i as f64 / (n - 1) as f64;
            let g = gaze_from_delta(Point::new(delta, 0.0), &model).g.x;
            CurvePoint {
                delta_mm: delta,
                theta_deg: (delta / r_ball).asin().to_degrees(),
                gaze_mm: g,
                back_mm: delta_from_gaze(Point::new(g, 0.0), &model).x,
            }
        })
        .collect();
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = eyeFrame)]
pub fn eye_frame_js(iris_x: f64, iris_y: f64, coverage: f64, noise: f64, seed: u32) -> Result<EyeFrame, JsError> {
    eye_frame(iris_x, iris_y, coverage, noise, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = circleFits)]
pub fn circle_fits_js(xs: &[f64], ys: &[f64]) -> Result<String, JsError> {
    circle_fits(xs, ys).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gazeCurve)]
pub fn gaze_curve_js(r_ball: f64, d: f64, steps: usize) -> Result<String, JsError> {
    gaze_curve(r_ball, d, steps).map_err(|e| JsError::new(&e))
}
