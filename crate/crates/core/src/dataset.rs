//! Synthetic datasets: rendered images plus a JSON manifest of ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::{EyeballModel, ScreenGeometry};
use crate::geometry::Point;
use crate::imgproc::GrayImage;
use crate::synth::{render, spec_for_target, target_grid, SynthError, SyntheticEyeSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("manifest has no images for calibration cross {0}")]
    MissingKnots(usize),
    #[error("manifest has no gaze targets")]
    MissingTargets,
    #[error("manifest lists {listed} images but {loaded} were supplied")]
    Mismatch { listed: usize, loaded: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Png => "png",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageRole {
    Sample,
    /// Fixating calibration cross `knot`.
    Knot,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisTruth {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub role: ImageRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knot: Option<usize>,
    pub iris: IrisTruth,
    pub corner: Point,
    pub target_screen: Option<Point>,
    pub spec_hash: String,
    pub eyelid_coverage: f64,
    /// The tracker is expected to reject this image (heavy occlusion).
    #[serde(default)]
    pub expect_failure: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub screen: ScreenGeometry,
    pub model: EyeballModel,
    /// Screen positions of the two calibration crosses, if the dataset has
    /// knot images.
    #[serde(default)]
    pub crosses: Option<[Point; 2]>,
    pub images: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn knot_indices(&self, cross: usize) -> Vec<usize> {
        self.images
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == ImageRole::Knot && e.knot == Some(cross))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.images
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == ImageRole::Target && e.target_screen.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks that the manifest can drive an evaluation.
    pub fn check_evaluable(&self) -> Result<(), DatasetError> {
        for k in 0..2 {
            if self.crosses.is_none() || self.knot_indices(k).is_empty() {
                return Err(DatasetError::MissingKnots(k));
            }
        }
        if self.target_indices().is_empty() {
            return Err(DatasetError::MissingTargets);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub images: Vec<GrayImage>,
}

impl Dataset {
    pub fn new(manifest: Manifest, images: Vec<GrayImage>) -> Result<Self, DatasetError> {
        if manifest.images.len() != images.len() {
            return Err(DatasetError::Mismatch {
                listed: manifest.images.len(),
                loaded: images.len(),
            });
        }
        Ok(Self { manifest, images })
    }
}

/// Heavy-occlusion threshold: at or above it the tracker should reject.
pub const FAILURE_COVERAGE: f64 = 0.6;

struct Builder {
    format: ImageFormat,
    entries: Vec<ManifestEntry>,
    images: Vec<GrayImage>,
}

impl Builder {
    fn new(format: ImageFormat) -> Self {
        Self {
            format,
            entries: Vec::new(),
            images: Vec::new(),
        }
    }

    fn add(
        &mut self,
        spec: &SyntheticEyeSpec,
        role: ImageRole,
        knot: Option<usize>,
        target: Option<Point>,
    ) -> Result<(), DatasetError> {
        let (img, truth) = render(spec)?;
        self.entries.push(ManifestEntry {
            file: format!("img_{:04}.{}", self.images.len(), self.format.extension()),
            role,
            knot,
            iris: IrisTruth {
                cx: truth.iris.a,
                cy: truth.iris.b,
                r: truth.iris.r,
            },
            corner: truth.corner_temporal,
            target_screen: target,
            spec_hash: spec.hash(),
            eyelid_coverage: spec.eyelid_coverage,
            expect_failure: spec.eyelid_coverage >= FAILURE_COVERAGE,
        });
        self.images.push(img);
        Ok(())
    }

    fn finish(self, screen: ScreenGeometry, model: EyeballModel, crosses: Option<[Point; 2]>) -> Dataset {
        Dataset {
            manifest: Manifest {
                version: MANIFEST_VERSION,
                screen,
                model,
                crosses,
                images: self.entries,
            },
            images: self.images,
        }
    }
}

/// `count` eyes with the iris at varied positions inside the opening.
pub fn sample_dataset(base: &SyntheticEyeSpec, count: usize, format: ImageFormat) -> Result<Dataset, DatasetError> {
    let mut b = Builder::new(format);
    let span = 0.6 * ((base.corner_temporal.x - base.corner_nasal.x) / 2.0 - base.iris_radius - 2.0).max(0.0);
    // keep the temporal corner inside the corner search box (1.5 R to 3.5 R
    // from the iris center) so every sample is fully trackable
    let to_corner = base.corner_temporal.x - base.iris_center.x;
    let lo = (-span).max(to_corner - 3.5 * base.iris_radius + 3.0);
    let hi = span.min(to_corner - 1.5 * base.iris_radius - 3.0);
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (0.0, 0.0) };
    for i in 0..count {
        // low-discrepancy offsets keep the set spread out and deterministic
        let u = (i as f64 * 0.618_033_988_75).fract();
        let v = (i as f64 * 0.754_877_666_2).fract() * 2.0 - 1.0;
        let spec = SyntheticEyeSpec {
            iris_center: Point::new(
                base.iris_center.x + lo + (hi - lo) * u,
                base.iris_center.y + 0.25 * base.iris_radius * v,
            ),
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        b.add(&spec, ImageRole::Sample, None, None)?;
    }
    Ok(b.finish(ScreenGeometry::default(), EyeballModel::default(), None))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub grid: (usize, usize),
    /// Fraction of the screen spanned by the target grid.
    pub span: f64,
    /// Images per calibration cross.
    pub dwell: usize,
    /// Cross inset from the screen edges, fraction of each dimension.
    pub cross_margin: f64,
    pub format: ImageFormat,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            grid: (5, 5),
            span: 0.8,
            dwell: 10,
            cross_margin: 0.05,
            format: ImageFormat::Pgm,
        }
    }
}

/// Calibration knots followed by a grid of gaze targets. The base spec's
/// iris position is the gaze at the screen center.
pub fn sweep_dataset(
    base: &SyntheticEyeSpec,
    model: &EyeballModel,
    screen: &ScreenGeometry,
    opts: &SweepOptions,
) -> Result<Dataset, DatasetError> {
    let mut b = Builder::new(opts.format);
    let crosses = screen.calibration_crosses(opts.cross_margin);
    let center = screen.center();
    let mut seed = base.seed;
    for (k, &cross) in crosses.iter().enumerate() {
        let spec = spec_for_target(base, model, screen, center, cross)?;
        for _ in 0..opts.dwell.max(1) {
            b.add(
                &SyntheticEyeSpec { seed, ..spec.clone() },
                ImageRole::Knot,
                Some(k),
                Some(cross),
            )?;
            seed = seed.wrapping_add(1);
        }
    }
    for target in target_grid(screen, opts.grid.0, opts.grid.1, opts.span) {
        let spec = spec_for_target(base, model, screen, center, target)?;
        b.add(
            &SyntheticEyeSpec { seed, ..spec },
            ImageRole::Target,
            None,
            Some(target),
        )?;
        seed = seed.wrapping_add(1);
    }
    Ok(b.finish(*screen, *model, Some(crosses)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_and_names() {
        let base = SyntheticEyeSpec::default();
        let d = sample_dataset(&base, 5, ImageFormat::Png).unwrap();
        assert_eq!(d.images.len(), 5);
        assert_eq!(d.manifest.images[4].file, "img_0004.png");
        assert!(d.manifest.images.iter().all(|e| !e.expect_failure));
        let hashes: std::collections::HashSet<_> = d.manifest.images.iter().map(|e| &e.spec_hash).collect();
        assert_eq!(hashes.len(), 5);
    }

    #[test]
    fn occluded_samples_are_flagged() {
        let base = SyntheticEyeSpec {
            eyelid_coverage: 0.7,
            ..Default::default()
        };
        let d = sample_dataset(&base, 3, ImageFormat::Pgm).unwrap();
        assert!(d.manifest.images.iter().all(|e| e.expect_failure));
    }

    #[test]
    fn sweep_layout() {
        let opts = SweepOptions {
            grid: (3, 3),
            dwell: 2,
            ..Default::default()
        };
        let d = sweep_dataset(
            &SyntheticEyeSpec::default(),
            &EyeballModel::default(),
            &ScreenGeometry::default(),
            &opts,
        )
        .unwrap();
        let m = &d.manifest;
        assert_eq!(m.images.len(), 2 * 2 + 9);
        assert_eq!(m.knot_indices(0), vec![0, 1]);
        assert_eq!(m.knot_indices(1), vec![2, 3]);
        assert_eq!(m.target_indices().len(), 9);
        m.check_evaluable().unwrap();
        let back: Manifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(&back, m);
    }

    #[test]
    fn samples_only_is_not_evaluable() {
        let d = sample_dataset(&SyntheticEyeSpec::default(), 2, ImageFormat::Pgm).unwrap();
        assert!(matches!(
            d.manifest.check_evaluable(),
            Err(DatasetError::MissingKnots(0))
        ));
    }
}
