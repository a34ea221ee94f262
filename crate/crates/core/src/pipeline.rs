//! Per-frame processing: image in, [`FrameResult`] out.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corner::{detect_corner, CornerPoint, Side};
use crate::gaze::{displacement, gaze_from_delta, to_screen, CalibrationMap, EyeballModel, ScreenGaze, ScreenGeometry};
use crate::geometry::{Point, Rect};
use crate::imgproc::{connected_components, downsample, isodata_threshold, isodata_threshold_in, segment, GrayImage};
use crate::iris::{
    coarse_seed, double_circle_fit, extract_samples, locate_eye_region, scan_iris_window, Circle, DoubleFit, EyeRegion,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Tracker settings, loadable from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub screen: ScreenGeometry,
    pub model: EyeballModel,
    /// Which eye corner serves as the reference point.
    pub side: Side,
    /// Moving-average window over screen gaze in streams; 1 disables it.
    pub smoothing_window: usize,
    /// WebSocket port for `serve`.
    pub port: u16,
    /// Downsampling factor for the coarse stage.
    pub scale: usize,
    /// Minimum inlier count as a fraction of the full-circle sample count
    /// (two samples per row, 4 R).
    pub min_sample_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            screen: ScreenGeometry::default(),
            model: EyeballModel::default(),
            side: Side::Temporal,
            smoothing_window: 1,
            port: 8008,
            scale: 8,
            min_sample_fraction: 0.45,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.scale == 0 {
            return bad("scale must be at least 1");
        }
        if self.smoothing_window == 0 {
            return bad("smoothing_window must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.min_sample_fraction) {
            return bad("min_sample_fraction must lie in [0, 1]");
        }
        if self.screen.width == 0 || self.screen.height == 0 || !(self.screen.mm_per_px > 0.0) {
            return bad("screen size and pixel pitch must be positive");
        }
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Ok,
    IrisOcclusion,
    NoEye,
    NoCorner,
    NotCalibrated,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Ok => "Ok",
            Status::IrisOcclusion => "IrisOcclusion",
            Status::NoEye => "NoEye",
            Status::NoCorner => "NoCorner",
            Status::NotCalibrated => "NotCalibrated",
        };
        f.write_str(s)
    }
}

/// Outcome of one frame. Fields downstream of a failing stage are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "wire::Record", try_from = "wire::Record")]
pub struct FrameResult {
    pub frame_id: u64,
    pub t_ms: u64,
    pub status: Status,
    pub iris: Option<Circle>,
    pub corner: Option<CornerPoint>,
    /// Iris displacement from the reference gaze, millimeters, up positive.
    pub delta: Option<Point>,
    pub screen: Option<ScreenGaze>,
    pub inliers: usize,
    pub proc_us: u64,
}

impl FrameResult {
    fn failed(status: Status) -> Self {
        Self {
            frame_id: 0,
            t_ms: 0,
            status,
            iris: None,
            corner: None,
            delta: None,
            screen: None,
            inliers: 0,
            proc_us: 0,
        }
    }

    /// Checks the status/field coupling.
    pub fn is_consistent(&self) -> bool {
        let (i, c, d, s) = (
            self.iris.is_some(),
            self.corner.is_some(),
            self.delta.is_some(),
            self.screen.is_some(),
        );
        match self.status {
            Status::Ok => i && c && d && s,
            Status::NotCalibrated => i && c && !d && !s,
            Status::NoCorner => i && !c && !d && !s,
            Status::IrisOcclusion | Status::NoEye => !i && !c && !d && !s,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frame result serializes")
    }

    /// The same result with timing fields zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self {
            t_ms: 0,
            proc_us: 0,
            ..self.clone()
        }
    }
}

mod wire {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub struct IrisRec {
        pub cx: f64,
        pub cy: f64,
        pub r: f64,
    }

    #[derive(Serialize, Deserialize)]
    pub struct DeltaRec {
        pub dx: f64,
        pub dy: f64,
    }

    #[derive(Serialize, Deserialize)]
    pub struct ScreenRec {
        pub x: f64,
        pub y: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        pub off_screen: bool,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Record {
        pub frame_id: u64,
        pub t_ms: u64,
        pub status: Status,
        pub iris: Option<IrisRec>,
        pub corner: Option<Point>,
        pub delta: Option<DeltaRec>,
        pub screen: Option<ScreenRec>,
        pub inliers: usize,
        pub proc_us: u64,
    }

    impl From<FrameResult> for Record {
        fn from(r: FrameResult) -> Self {
            Record {
                frame_id: r.frame_id,
                t_ms: r.t_ms,
                status: r.status,
                iris: r.iris.map(|c| IrisRec {
                    cx: c.a,
                    cy: c.b,
                    r: c.r,
                }),
                corner: r.corner.map(|c| c.point()),
                delta: r.delta.map(|d| DeltaRec { dx: d.x, dy: d.y }),
                screen: r.screen.map(|s| ScreenRec {
                    x: s.point().x,
                    y: s.point().y,
                    off_screen: !s.is_on_screen(),
                }),
                inliers: r.inliers,
                proc_us: r.proc_us,
            }
        }
    }

    impl TryFrom<Record> for FrameResult {
        type Error = String;
        fn try_from(r: Record) -> Result<Self, String> {
            let out = FrameResult {
                frame_id: r.frame_id,
                t_ms: r.t_ms,
                status: r.status,
                iris: r.iris.map(|c| Circle::new(c.cx, c.cy, c.r)),
                corner: r.corner.map(|p| CornerPoint {
                    x: p.x,
                    y: p.y,
                    side: Side::default(),
                }),
                delta: r.delta.map(|d| Point::new(d.dx, d.dy)),
                screen: r.screen.map(|s| {
                    let p = Point::new(s.x, s.y);
                    if s.off_screen {
                        ScreenGaze::OffScreen(p)
                    } else {
                        ScreenGaze::OnScreen(p)
                    }
                }),
                inliers: r.inliers,
                proc_us: r.proc_us,
            };
            if out.is_consistent() {
                Ok(out)
            } else {
                Err(format!("fields do not match status {}", out.status))
            }
        }
    }
}

/// Wall-clock timer for `proc_us`. There is no clock on
/// wasm32-unknown-unknown (`Instant::now` panics), so it reads zero there.
struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn micros(&self) -> u64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_micros() as u64;
        #[cfg(target_arch = "wasm32")]
        return 0;
    }
}

/// Intermediate products of one frame, for overlays and diagnostics.
#[derive(Clone, Debug, Default)]
pub struct Detection {
    pub eye: Option<EyeRegion>,
    /// Full-resolution seed of the boundary scan.
    pub seed: Option<(usize, usize)>,
    pub refined_threshold: Option<u8>,
    pub samples: Vec<Point>,
    pub fit: Option<DoubleFit>,
    pub corner: Option<CornerPoint>,
}

/// Runs the full chain and keeps the intermediate products.
pub fn process_frame_detailed(
    img: &GrayImage,
    cal: Option<&CalibrationMap>,
    config: &PipelineConfig,
) -> (FrameResult, Detection) {
    let start = Stopwatch::start();
    let mut det = Detection::default();
    let mut result = run_stages(img, cal, config, &mut det);
    result.proc_us = start.micros();
    (result, det)
}

/// Processes one grayscale frame. Never panics; failures become statuses.
pub fn process_frame(img: &GrayImage, cal: Option<&CalibrationMap>, config: &PipelineConfig) -> FrameResult {
    process_frame_detailed(img, cal, config).0
}

fn run_stages(
    img: &GrayImage,
    cal: Option<&CalibrationMap>,
    config: &PipelineConfig,
    det: &mut Detection,
) -> FrameResult {
    let s = config.scale.max(1);
    let (w, h) = ((img.width() / s) * s, (img.height() / s) * s);
    // the coarse stage needs a few blocks each way
    if w < 4 * s || h < 4 * s {
        return FrameResult::failed(Status::NoEye);
    }
    let cropped;
    let img = if (w, h) == (img.width(), img.height()) {
        img
    } else {
        cropped = img.crop(&Rect::new(0, 0, w - 1, h - 1));
        &cropped
    };
    let Ok(coarse) = downsample(img, s) else {
        return FrameResult::failed(Status::NoEye);
    };
    let threshold = isodata_threshold(&coarse);
    let bin = segment(&coarse, threshold);
    let regions = connected_components(&bin);
    let Ok(eye) = locate_eye_region(&bin, &regions, s, threshold) else {
        return FrameResult::failed(Status::NoEye);
    };
    det.eye = Some(eye.clone());
    let Ok(window) = scan_iris_window(&bin, &eye.coarse_box) else {
        return FrameResult::failed(Status::NoEye);
    };
    let (col, row) = coarse_seed(&bin, &eye.coarse_box, &window);

    // local threshold around the iris, where the histogram is iris vs sclera
    let half = (3 * window.width) / 2;
    let local = Rect::new(
        col.saturating_sub(half),
        row.saturating_sub(half),
        (col + half).min(coarse.width() - 1),
        (row + half).min(coarse.height() - 1),
    );
    let refined = isodata_threshold_in(&coarse, &local);
    det.refined_threshold = Some(refined);
    let seed = ((col * s + s / 2).min(w - 1), (row * s + s / 2).min(h - 1));
    det.seed = Some(seed);

    let max_jump = window.width * s;
    let Ok(samples) = extract_samples(img, refined, seed, &eye.bounding_box, max_jump) else {
        return FrameResult::failed(Status::IrisOcclusion);
    };
    let Ok(coarse_fit) = double_circle_fit(&samples) else {
        return FrameResult::failed(Status::IrisOcclusion);
    };
    // second pass seeded and thresholded relative to the first circle, so
    // the result no longer depends on where the block grid falls
    let (samples, fit) = match refine_pass(img, &coarse_fit.circle, &eye.bounding_box, max_jump) {
        Some((t, samples, fit)) => {
            det.refined_threshold = Some(t);
            (samples, fit)
        }
        None => (samples, coarse_fit),
    };
    det.samples = samples;
    let circle = fit.circle;
    let inliers = fit.inliers.len();
    det.fit = Some(fit);
    let plausible = circle.r.is_finite()
        && circle.r >= 1.0
        && 2.0 * circle.r <= eye.bounding_box.width() as f64
        && eye.bounding_box.contains_point(circle.center());
    let required = (config.min_sample_fraction * 4.0 * circle.r).max(6.0);
    if !plausible || (inliers as f64) < required {
        let mut r = FrameResult::failed(Status::IrisOcclusion);
        r.inliers = inliers;
        return r;
    }

    let mut result = FrameResult {
        iris: Some(circle),
        inliers,
        ..FrameResult::failed(Status::NoCorner)
    };
    let Ok(corner) = detect_corner(img, &circle, &eye, config.side) else {
        return result;
    };
    det.corner = Some(corner);
    result.corner = Some(corner);
    let Ok(delta) = displacement(&circle, &corner, cal) else {
        result.status = Status::NotCalibrated;
        return result;
    };
    let g = gaze_from_delta(delta, &config.model).g;
    match to_screen(g, cal, &config.screen) {
        Ok(screen) => {
            result.delta = Some(delta);
            result.screen = Some(screen);
            result.status = Status::Ok;
        }
        Err(_) => result.status = Status::NotCalibrated,
    }
    result
}

fn refine_pass(img: &GrayImage, circle: &Circle, eye: &Rect, max_jump: usize) -> Option<(u8, Vec<Point>, DoubleFit)> {
    if !(circle.r.is_finite() && circle.r >= 1.0) || !eye.contains_point(circle.center()) {
        return None;
    }
    let (cx, cy) = (circle.a.round() as usize, circle.b.round() as usize);
    if !eye.contains(cx, cy) {
        return None;
    }
    let half = (1.5 * circle.r).round() as usize;
    let area = Rect::new(
        cx.saturating_sub(half),
        cy.saturating_sub(half),
        (cx + half).min(img.width() - 1),
        (cy + half).min(img.height() - 1),
    );
    let t = isodata_threshold_in(img, &area);
    let samples = extract_samples(img, t, (cx, cy), eye, max_jump).ok()?;
    let fit = double_circle_fit(&samples).ok()?;
    Some((t, samples, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render, SyntheticEyeSpec};

    #[test]
    fn clean_eye_uncalibrated() {
        let spec = SyntheticEyeSpec::default();
        let (img, truth) = render(&spec).unwrap();
        let (r, det) = process_frame_detailed(&img, None, &PipelineConfig::default());
        assert_eq!(r.status, Status::NotCalibrated, "{det:?}");
        let iris = r.iris.unwrap();
        assert!(iris.center().distance(&truth.iris.center()) <= 1.0, "{iris:?}");
        assert!((iris.r - truth.iris.r).abs() <= 1.0, "{iris:?}");
        let corner = r.corner.unwrap();
        assert!(corner.point().distance(&truth.corner_temporal) <= 3.0, "{corner:?}");
        assert!(r.is_consistent());
    }

    #[test]
    fn blank_image_has_no_eye() {
        let img = GrayImage::filled(640, 480, 180);
        assert_eq!(
            process_frame(&img, None, &PipelineConfig::default()).status,
            Status::NoEye
        );
    }

    #[test]
    fn tiny_and_odd_sized_images() {
        let cfg = PipelineConfig::default();
        for (w, h) in [(1, 1), (7, 3), (33, 31), (641, 479)] {
            let img = GrayImage::from_fn(w, h, |x, y| ((x * 37 + y * 91) % 256) as u8);
            let r = process_frame(&img, None, &cfg);
            assert!(r.is_consistent());
        }
    }

    #[test]
    fn heavy_occlusion() {
        let spec = SyntheticEyeSpec {
            eyelid_coverage: 0.7,
            ..Default::default()
        };
        let (img, _) = render(&spec).unwrap();
        let r = process_frame(&img, None, &PipelineConfig::default());
        assert_eq!(r.status, Status::IrisOcclusion);
        assert!(r.iris.is_none());
    }

    #[test]
    fn json_shape() {
        let r = FrameResult {
            frame_id: 3,
            t_ms: 100,
            status: Status::Ok,
            iris: Some(Circle::new(1.0, 2.0, 3.0)),
            corner: Some(CornerPoint {
                x: 4.0,
                y: 5.0,
                side: Side::Temporal,
            }),
            delta: Some(Point::new(0.5, -0.5)),
            screen: Some(ScreenGaze::OffScreen(Point::new(-1.0, 7.0))),
            inliers: 40,
            proc_us: 900,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["status"], "Ok");
        assert_eq!(v["iris"]["cx"], 1.0);
        assert_eq!(v["delta"]["dy"], -0.5);
        assert_eq!(v["screen"]["off_screen"], true);
        let back: FrameResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);

        let failed = FrameResult::failed(Status::NoEye);
        let v: serde_json::Value = serde_json::from_str(&failed.to_json()).unwrap();
        assert!(v["iris"].is_null() && v["screen"].is_null());
    }

    #[test]
    fn inconsistent_record_rejected() {
        let text = r#"{"frame_id":0,"t_ms":0,"status":"Ok","iris":null,"corner":null,"delta":null,"screen":null,"inliers":0,"proc_us":0}"#;
        assert!(serde_json::from_str::<FrameResult>(text).is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = PipelineConfig::from_toml("port = 9000\nside = \"nasal\"\n[model]\nd = 500.0\n").unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.side, Side::Nasal);
        assert_eq!(cfg.model.d, 500.0);
        assert_eq!(cfg.model.r_ball, 12.5);
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(PipelineConfig::from_toml("smoothing_window = 0").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }
}
