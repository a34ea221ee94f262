//! Visual-camera gaze tracking: iris localisation by double circle fitting,
//! eye-corner detection with the variance projection function, and an
//! eyeball model that maps the corner-to-iris vector to a screen point.
//!
//! The image pipeline works on 8-bit grayscale frames. A synthetic eye
//! renderer with exact ground truth drives the tests and the evaluation.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod calibration;
pub mod corner;
pub mod dataset;
pub mod eval;
pub mod gaze;
pub mod geometry;
pub mod imgproc;
#[cfg(feature = "io")]
pub mod io;
pub mod iris;
pub mod overlay;
pub mod pipeline;
pub mod stream;
pub mod synth;

pub use corner::{detect_corner, CornerError, CornerPoint, Side};
pub use gaze::{CalibrationMap, EyeballModel, GazeError, ScreenGeometry};
pub use geometry::{Point, Rect};
pub use imgproc::{GrayImage, ImageError};
pub use iris::{double_circle_fit, fit_circle_algebraic, Circle, IrisError};
pub use pipeline::{process_frame, FrameResult, PipelineConfig, Status};
pub use synth::{render, SynthError, SyntheticEyeSpec};
