//! Throughput measurement of the per-frame pipeline.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gaze::CalibrationMap;
use crate::imgproc::GrayImage;
use crate::pipeline::{process_frame, PipelineConfig};

/// Frame-processings below which latency statistics are not reported.
pub const MIN_PROCESSINGS: usize = 1000;

/// Sampling rate the original system was reported to reach, Hz. Informational.
pub const REFERENCE_RATE_HZ: f64 = 300.0;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("benchmark dataset is empty")]
    EmptyDataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub processings: usize,
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
    pub fps: f64,
    pub reference_rate_hz: f64,
    /// `fps / reference_rate_hz`.
    pub margin: f64,
    /// Digest of all results with timing removed.
    pub checksum: String,
}

/// Processes the dataset `repetitions` times (more if needed to reach
/// [`MIN_PROCESSINGS`]) on the calling thread.
pub fn bench(
    frames: &[GrayImage],
    cal: Option<&CalibrationMap>,
    config: &PipelineConfig,
    repetitions: usize,
) -> Result<BenchReport, BenchError> {
    if frames.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    let passes = repetitions.max(MIN_PROCESSINGS.div_ceil(frames.len())).max(1);
    let mut latencies = Vec::with_capacity(passes * frames.len());
    let mut hasher = Sha256::new();
    for _ in 0..passes {
        for img in frames {
            let t = Instant::now();
            let r = process_frame(img, cal, config);
            latencies.push(t.elapsed().as_secs_f64() * 1e6);
            hasher.update(r.without_timing().to_json().as_bytes());
        }
    }
    latencies.sort_by(|a, b| a.total_cmp(b));
    let n = latencies.len();
    let pick = |q: f64| latencies[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
    let busy: f64 = latencies.iter().sum();
    let fps = n as f64 / (busy / 1e6).max(f64::MIN_POSITIVE);
    Ok(BenchReport {
        frames: frames.len(),
        processings: n,
        mean_us: busy / n as f64,
        median_us: pick(0.5),
        p99_us: pick(0.99),
        fps,
        reference_rate_hz: REFERENCE_RATE_HZ,
        margin: fps / REFERENCE_RATE_HZ,
        checksum: hex::encode(&hasher.finalize()[..16]),
    })
}
