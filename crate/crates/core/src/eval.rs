//! End-to-end evaluation: calibrate on a dataset's knot images, track its
//! gaze targets and report the screen error as a view angle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{run_calibration_sequence, CalibrationError};
use crate::dataset::{Dataset, DatasetError};
use crate::gaze::{angular_error, CalibrationMap};
use crate::geometry::Point;
use crate::pipeline::{process_frame, PipelineConfig, Status};
use crate::stream::MemorySource;

/// Screen distance equivalent to 4.40° at 650 mm, used as a unit check.
pub const ANCHOR_MM: f64 = 50.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEval {
    pub file: String,
    pub target: Point,
    pub status: Status,
    pub screen: Option<Point>,
    /// Absolute screen error per axis, millimeters.
    pub err_x_mm: Option<f64>,
    pub err_y_mm: Option<f64>,
    pub err_x_deg: Option<f64>,
    pub err_y_deg: Option<f64>,
}

/// Errors are absolute per axis. Every degree figure is the view angle of
/// the millimeter figure next to it at `distance_mm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub targets: usize,
    pub tracked: usize,
    pub detection_rate: f64,
    pub by_status: BTreeMap<String, usize>,
    pub mean_err_x_mm: f64,
    pub mean_err_y_mm: f64,
    pub max_err_x_mm: f64,
    pub max_err_y_mm: f64,
    pub mean_err_x_deg: f64,
    pub mean_err_y_deg: f64,
    pub max_err_x_deg: f64,
    pub max_err_y_deg: f64,
    /// View angle of [`ANCHOR_MM`] at the configured distance.
    pub anchor_deg: f64,
    pub distance_mm: f64,
    pub calibration: CalibrationMap,
    pub per_target: Vec<TargetEval>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate(dataset: &Dataset, config: &PipelineConfig) -> Result<EvalReport, EvalError> {
    let m = &dataset.manifest;
    m.check_evaluable()?;
    let crosses = m.crosses.ok_or(DatasetError::MissingKnots(0))?;
    let knots = [m.knot_indices(0), m.knot_indices(1)];
    let dwell = knots[0].len().min(knots[1].len());
    let frames = knots
        .iter()
        .flat_map(|k| k[..dwell].iter().map(|&i| dataset.images[i].clone()));
    let mut source = MemorySource::new(frames, 30.0);
    let cal = run_calibration_sequence(&mut source, config, crosses, dwell, |_| {})?;

    let d = config.model.d;
    let mm = config.screen.mm_per_px;
    let mut per_target = Vec::new();
    let mut by_status = BTreeMap::new();
    for i in m.target_indices() {
        let entry = &m.images[i];
        let target = entry.target_screen.expect("target index has a target");
        let r = process_frame(&dataset.images[i], Some(&cal), config);
        *by_status.entry(r.status.to_string()).or_insert(0) += 1;
        let screen = r.screen.map(|s| s.point());
        let ex = screen.map(|p| (p.x - target.x).abs() * mm);
        let ey = screen.map(|p| (p.y - target.y).abs() * mm);
        per_target.push(TargetEval {
            file: entry.file.clone(),
            target,
            status: r.status,
            screen,
            err_x_mm: ex,
            err_y_mm: ey,
            err_x_deg: ex.map(|e| angular_error(e, d)),
            err_y_deg: ey.map(|e| angular_error(e, d)),
        });
    }
    let xs: Vec<f64> = per_target.iter().filter_map(|t| t.err_x_mm).collect();
    let ys: Vec<f64> = per_target.iter().filter_map(|t| t.err_y_mm).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let (mx, my, xx, xy) = (mean(&xs), mean(&ys), max(&xs), max(&ys));
    let targets = per_target.len();
    Ok(EvalReport {
        targets,
        tracked: xs.len(),
        detection_rate: xs.len() as f64 / targets as f64,
        by_status,
        mean_err_x_mm: mx,
        mean_err_y_mm: my,
        max_err_x_mm: xx,
        max_err_y_mm: xy,
        mean_err_x_deg: angular_error(mx, d),
        mean_err_y_deg: angular_error(my, d),
        max_err_x_deg: angular_error(xx, d),
        max_err_y_deg: angular_error(xy, d),
        anchor_deg: angular_error(ANCHOR_MM, d),
        distance_mm: d,
        calibration: cal,
        per_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{sample_dataset, sweep_dataset, ImageFormat, SweepOptions};
    use crate::synth::SyntheticEyeSpec;

    #[test]
    fn small_sweep() {
        let cfg = PipelineConfig::default();
        let opts = SweepOptions {
            grid: (3, 3),
            dwell: 3,
            ..Default::default()
        };
        let d = sweep_dataset(&SyntheticEyeSpec::default(), &cfg.model, &cfg.screen, &opts).unwrap();
        let r = evaluate(&d, &cfg).unwrap();
        assert_eq!(r.targets, 9);
        assert_eq!(r.tracked, 9);
        assert!(r.mean_err_x_deg < 0.5 && r.mean_err_y_deg < 0.5, "{r:?}");
        assert!((r.anchor_deg - 4.40).abs() < 0.05);
        for t in &r.per_target {
            let deg = (t.err_x_mm.unwrap() / 650.0).atan().to_degrees();
            assert!((t.err_x_deg.unwrap() - deg).abs() < 1e-12);
        }
        assert!((r.mean_err_y_deg - (r.mean_err_y_mm / 650.0).atan().to_degrees()).abs() < 1e-12);
    }

    #[test]
    fn reference_gaze_copies() {
        // every target is the screen center, i.e. the base iris position
        let cfg = PipelineConfig::default();
        let opts = SweepOptions {
            grid: (1, 1),
            dwell: 3,
            ..Default::default()
        };
        let mut d = sweep_dataset(&SyntheticEyeSpec::default(), &cfg.model, &cfg.screen, &opts).unwrap();
        let last = d.images.len() - 1;
        for _ in 0..4 {
            d.images.push(d.images[last].clone());
            d.manifest.images.push(d.manifest.images[last].clone());
        }
        let r = evaluate(&d, &cfg).unwrap();
        assert_eq!(r.targets, 5);
        assert!(r.mean_err_x_deg <= 0.1 && r.mean_err_y_deg <= 0.1, "{r:?}");
    }

    #[test]
    fn needs_knots() {
        let d = sample_dataset(&SyntheticEyeSpec::default(), 2, ImageFormat::Pgm).unwrap();
        assert!(matches!(
            evaluate(&d, &PipelineConfig::default()),
            Err(EvalError::Dataset(DatasetError::MissingKnots(0)))
        ));
    }
}
