//! Two-cross calibration over a live or replayed frame source.
//!
//! While each cross is shown the subject fixates it; the corner→iris
//! vectors of a dwell window of frames are reduced to a per-axis median,
//! which keeps the mapping robust to blinks and missed detections.

use thiserror::Error;

use crate::gaze::{calibrate, corner_to_iris, CalibrationMap, EyeballModel, GazeError};
use crate::geometry::Point;
use crate::pipeline::{process_frame, FrameResult, PipelineConfig};
use crate::stream::{FrameSource, StreamError};

pub const DEFAULT_DWELL: usize = 30;
pub const DEFAULT_MIN_VALID: usize = 10;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration failed at cross {cross}: {valid} valid frames, need {required}")]
    TooFewValid {
        cross: usize,
        valid: usize,
        required: usize,
    },
    #[error("source ended during cross {cross}")]
    SourceExhausted { cross: usize },
    #[error(transparent)]
    Source(#[from] StreamError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
}

#[derive(Debug)]
pub enum CollectorStep {
    /// Keep feeding frames.
    Continue,
    /// Dwell on the previous cross is complete; show this one.
    ShowCross(usize),
    Done(Result<CalibrationMap, CalibrationError>),
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Accumulates frame results for the two crosses, one dwell window each.
#[derive(Clone, Debug)]
pub struct CalibrationCollector {
    crosses: [Point; 2],
    dwell: usize,
    min_valid: usize,
    model: EyeballModel,
    current: usize,
    seen: usize,
    vectors: [Vec<Point>; 2],
    radii: Vec<f64>,
}

impl CalibrationCollector {
    pub fn new(crosses: [Point; 2], model: EyeballModel) -> Self {
        Self::with_window(crosses, model, DEFAULT_DWELL, DEFAULT_MIN_VALID)
    }

    pub fn with_window(crosses: [Point; 2], model: EyeballModel, dwell: usize, min_valid: usize) -> Self {
        Self {
            crosses,
            dwell: dwell.max(1),
            min_valid: min_valid.max(1),
            model,
            current: 0,
            seen: 0,
            vectors: [Vec::new(), Vec::new()],
            radii: Vec::new(),
        }
    }

    pub fn crosses(&self) -> [Point; 2] {
        self.crosses
    }

    /// Index of the cross currently collected.
    pub fn current_cross(&self) -> usize {
        self.current
    }

    /// Valid readings so far for the current cross.
    pub fn valid(&self) -> usize {
        self.vectors[self.current.min(1)].len()
    }

    /// Feeds one frame result. A frame is valid when both iris and corner
    /// were found.
    pub fn push(&mut self, result: &FrameResult) -> CollectorStep {
        if self.current > 1 {
            return CollectorStep::Continue;
        }
        if let (Some(iris), Some(corner)) = (result.iris, result.corner) {
            self.vectors[self.current].push(corner_to_iris(&iris, &corner));
            self.radii.push(iris.r);
        }
        self.seen += 1;
        if self.seen < self.dwell {
            return CollectorStep::Continue;
        }
        let valid = self.vectors[self.current].len();
        if valid < self.min_valid {
            let cross = self.current;
            self.current = 2;
            return CollectorStep::Done(Err(CalibrationError::TooFewValid {
                cross,
                valid,
                required: self.min_valid,
            }));
        }
        self.seen = 0;
        self.current += 1;
        if self.current == 1 {
            return CollectorStep::ShowCross(1);
        }
        CollectorStep::Done(self.finish())
    }

    fn finish(&mut self) -> Result<CalibrationMap, CalibrationError> {
        let reading = |k: usize| {
            let mut xs: Vec<f64> = self.vectors[k].iter().map(|p| p.x).collect();
            let mut ys: Vec<f64> = self.vectors[k].iter().map(|p| p.y).collect();
            (Point::new(median(&mut xs), median(&mut ys)), self.crosses[k])
        };
        let readings = [reading(0), reading(1)];
        let radius = median(&mut self.radii.clone());
        Ok(calibrate(readings, &self.model, radius)?)
    }
}

/// Shows the two crosses in turn (via `on_cross`) and builds the map from
/// the frames collected while each is displayed.
pub fn run_calibration_sequence(
    source: &mut dyn FrameSource,
    config: &PipelineConfig,
    crosses: [Point; 2],
    dwell: usize,
    mut on_cross: impl FnMut(usize),
) -> Result<CalibrationMap, CalibrationError> {
    let mut collector = CalibrationCollector::with_window(crosses, config.model, dwell, DEFAULT_MIN_VALID.min(dwell));
    on_cross(0);
    while let Some(frame) = source.next_frame()? {
        let r = process_frame(&frame.image, None, config);
        match collector.push(&r) {
            CollectorStep::Continue => {}
            CollectorStep::ShowCross(i) => on_cross(i),
            CollectorStep::Done(result) => return result,
        }
    }
    Err(CalibrationError::SourceExhausted {
        cross: collector.current_cross(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corner::{CornerPoint, Side};
    use crate::iris::Circle;
    use crate::pipeline::Status;

    fn reading(v: Point) -> FrameResult {
        let mut r = process_frame(
            &crate::imgproc::GrayImage::filled(8, 8, 0),
            None,
            &PipelineConfig::default(),
        );
        r.status = Status::NotCalibrated;
        r.iris = Some(Circle::new(100.0 + v.x, 50.0 + v.y, 40.0));
        r.corner = Some(CornerPoint {
            x: 100.0,
            y: 50.0,
            side: Side::Temporal,
        });
        r
    }

    fn blank() -> FrameResult {
        process_frame(
            &crate::imgproc::GrayImage::filled(8, 8, 0),
            None,
            &PipelineConfig::default(),
        )
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn half_invalid_frames_still_calibrate() {
        let crosses = [Point::new(96.0, 1026.0), Point::new(1824.0, 54.0)];
        let mut c = CalibrationCollector::new(crosses, EyeballModel::default());
        let vs = [Point::new(-80.0, 3.0), Point::new(-130.0, -5.0)];
        let mut steps = Vec::new();
        for (k, v) in vs.iter().enumerate() {
            for i in 0..30 {
                let r = if i % 2 == 0 { reading(*v) } else { blank() };
                match c.push(&r) {
                    CollectorStep::Continue => {}
                    other => steps.push((k, i, other)),
                }
            }
        }
        assert_eq!(steps.len(), 2);
        assert!(matches!(steps[0], (0, 29, CollectorStep::ShowCross(1))));
        let CollectorStep::Done(Ok(cal)) = &steps[1].2 else {
            panic!("expected a map, got {:?}", steps[1]);
        };
        assert_eq!(cal.reference_vector, Point::new(-105.0, -1.0));
        assert!((cal.px_to_mm - 5.9 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn all_invalid_fails() {
        let mut c = CalibrationCollector::new([Point::new(0.0, 1.0), Point::new(1.0, 0.0)], EyeballModel::default());
        let mut last = CollectorStep::Continue;
        for _ in 0..30 {
            last = c.push(&blank());
        }
        assert!(matches!(
            last,
            CollectorStep::Done(Err(CalibrationError::TooFewValid {
                cross: 0,
                valid: 0,
                required: 10
            }))
        ));
    }
}
