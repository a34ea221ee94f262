//! Synthetic eye renderer with exact ground truth.
//!
//! The scene is skin with an eyebrow blob above an almond eye opening bounded
//! by two parabolic lids through the corners. The upper lid carries a dark
//! lash band and sits `eyelid_coverage` iris diameters below the iris top,
//! so it follows the iris when the gaze moves vertically. Noise is additive
//! Gaussian, keyed on scene coordinates so that a translated scene carries
//! the same noise pattern along with it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gaze::{delta_from_gaze, EyeballModel, ScreenGeometry};
use crate::geometry::{Point, Rect};
use crate::imgproc::GrayImage;
use crate::iris::Circle;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic eye spec: {0}")]
    InvalidSpec(String),
    #[error("gaze target ({x:.1}, {y:.1}) is unreachable: {reason}")]
    TargetUnreachable { x: f64, y: f64, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Intensities {
    pub skin: u8,
    pub sclera: u8,
    pub iris: u8,
    pub pupil: u8,
    pub eyebrow: u8,
    pub lash: u8,
}

impl Default for Intensities {
    fn default() -> Self {
        Self {
            skin: 180,
            sclera: 230,
            iris: 60,
            pupil: 20,
            eyebrow: 50,
            lash: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticEyeSpec {
    pub width: usize,
    pub height: usize,
    pub iris_center: Point,
    pub iris_radius: f64,
    pub pupil_radius: f64,
    pub corner_temporal: Point,
    pub corner_nasal: Point,
    /// Fraction of the iris diameter hidden under the upper lid, [0, 0.9].
    pub eyelid_coverage: f64,
    /// Depth of the lower lid below the corner line at mid-eye, pixels.
    pub lower_lid_depth: f64,
    /// Vertical thickness of the solid lash band, pixels.
    pub lash_thickness: f64,
    /// Lash-to-skin fade above the solid band, pixels.
    pub lash_fade: f64,
    /// The eyebrow is the ellipse inscribed in this box.
    pub eyebrow_box: Rect,
    pub intensities: Intensities,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Translation already applied to the scene; noise is sampled at
    /// `pixel - scene_offset`.
    pub scene_offset: (i64, i64),
}

impl Default for SyntheticEyeSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            iris_center: Point::new(320.0, 300.0),
            iris_radius: 40.0,
            pupil_radius: 16.0,
            corner_temporal: Point::new(425.0, 300.0),
            corner_nasal: Point::new(215.0, 300.0),
            eyelid_coverage: 0.1,
            lower_lid_depth: 70.0,
            lash_thickness: 9.0,
            lash_fade: 5.0,
            eyebrow_box: Rect::new(110, 90, 530, 150),
            intensities: Intensities::default(),
            noise_sigma: 4.0,
            seed: 0,
            scene_offset: (0, 0),
        }
    }
}

/// Exact scene geometry of a rendered image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub iris: Circle,
    pub corner_temporal: Point,
    pub corner_nasal: Point,
}

impl SyntheticEyeSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        let c = &self.intensities;
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero".into());
        }
        if !(self.iris_radius > 0.0) || !(self.pupil_radius >= 0.0) {
            return bad("radii must be positive".into());
        }
        if self.pupil_radius >= self.iris_radius {
            return bad(format!(
                "pupil radius {} must be below iris radius {}",
                self.pupil_radius, self.iris_radius
            ));
        }
        let (cx, cy, r) = (self.iris_center.x, self.iris_center.y, self.iris_radius);
        if cx - r < 0.0 || cy - r < 0.0 || cx + r > (self.width - 1) as f64 || cy + r > (self.height - 1) as f64 {
            return bad("iris disk must lie inside the image".into());
        }
        if !(0.0..=0.9).contains(&self.eyelid_coverage) {
            return bad(format!("eyelid coverage {} outside [0, 0.9]", self.eyelid_coverage));
        }
        if !(c.sclera > c.skin && c.skin > c.iris && c.iris > c.pupil) {
            return bad("intensities must satisfy sclera > skin > iris > pupil".into());
        }
        if self.corner_temporal.x - self.corner_nasal.x < 2.0 {
            return bad("temporal corner must lie right of the nasal corner".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.lower_lid_depth >= 0.0) {
            return bad("noise sigma and lid depth must be non-negative".into());
        }
        Ok(())
    }

    /// The same scene moved rigidly by `(dx, dy)` pixels.
    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        let shift = |p: Point| Point::new(p.x + dx as f64, p.y + dy as f64);
        let sh = |v: usize, d: i64| (v as i64 + d).max(0) as usize;
        let b = self.eyebrow_box;
        Self {
            iris_center: shift(self.iris_center),
            corner_temporal: shift(self.corner_temporal),
            corner_nasal: shift(self.corner_nasal),
            eyebrow_box: Rect::new(sh(b.x_min, dx), sh(b.y_min, dy), sh(b.x_max, dx), sh(b.y_max, dy)),
            scene_offset: (self.scene_offset.0 + dx, self.scene_offset.1 + dy),
            ..self.clone()
        }
    }

    /// Short content hash identifying this spec.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            iris: Circle::new(self.iris_center.x, self.iris_center.y, self.iris_radius),
            corner_temporal: self.corner_temporal,
            corner_nasal: self.corner_nasal,
        }
    }
}

/// Lid geometry along the eye, precomputed per spec.
struct Lids {
    nasal: Point,
    temporal: Point,
    mid: f64,
    half_width: f64,
    upper_height: f64,
    lower_depth: f64,
}

impl Lids {
    fn new(spec: &SyntheticEyeSpec) -> Self {
        let (nasal, temporal) = (spec.corner_nasal, spec.corner_temporal);
        let mid = (nasal.x + temporal.x) / 2.0;
        let half_width = (temporal.x - nasal.x) / 2.0;
        let mut lids = Self {
            nasal,
            temporal,
            mid,
            half_width,
            upper_height: 0.0,
            lower_depth: spec.lower_lid_depth,
        };
        // place the upper lid at the requested depth over the iris center
        let ix = spec.iris_center.x;
        let lid_y = spec.iris_center.y - spec.iris_radius + 2.0 * spec.iris_radius * spec.eyelid_coverage;
        let bulge = (1.0 - lids.t(ix).powi(2)).max(0.05);
        lids.upper_height = (lids.base(ix) - lid_y) / bulge;
        lids
    }

    fn t(&self, x: f64) -> f64 {
        (x - self.mid) / self.half_width
    }

    fn base(&self, x: f64) -> f64 {
        let s = (x - self.nasal.x) / (self.temporal.x - self.nasal.x);
        self.nasal.y + s * (self.temporal.y - self.nasal.y)
    }

    fn within(&self, x: f64) -> bool {
        x >= self.nasal.x && x <= self.temporal.x
    }

    fn upper(&self, x: f64) -> f64 {
        self.base(x) - self.upper_height * (1.0 - self.t(x).powi(2))
    }

    fn lower(&self, x: f64) -> f64 {
        self.base(x) + self.lower_depth * (1.0 - self.t(x).powi(2))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal deviate keyed on (seed, x, y).
fn gaussian(seed: u64, x: i64, y: i64) -> f64 {
    let k = splitmix(seed ^ splitmix((x as u64).wrapping_mul(0x1_0000_01B3) ^ (y as u64).rotate_left(32)));
    let u1 = ((k >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = (splitmix(k) >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Noise-free intensity of the scene at a pixel center.
fn scene_value(spec: &SyntheticEyeSpec, lids: &Lids, x: f64, y: f64) -> f64 {
    let c = &spec.intensities;
    if lids.within(x) {
        let (up, lo) = (lids.upper(x), lids.lower(x));
        if y >= up && y <= lo {
            let d = (x - spec.iris_center.x).hypot(y - spec.iris_center.y);
            return if d <= spec.pupil_radius {
                c.pupil as f64
            } else if d <= spec.iris_radius {
                c.iris as f64
            } else {
                c.sclera as f64
            };
        }
        let above = up - y;
        if above > 0.0 && above <= spec.lash_thickness {
            return c.lash as f64;
        }
        if above > spec.lash_thickness && above <= spec.lash_thickness + spec.lash_fade {
            let f = (above - spec.lash_thickness) / (spec.lash_fade + 1.0);
            return c.lash as f64 + f * (c.skin as f64 - c.lash as f64);
        }
    }
    let b = &spec.eyebrow_box;
    let (ex, ey) = (b.center().x, b.center().y);
    let (ax, ay) = (b.width() as f64 / 2.0, b.height() as f64 / 2.0);
    if ((x - ex) / ax).powi(2) + ((y - ey) / ay).powi(2) <= 1.0 {
        return c.eyebrow as f64;
    }
    c.skin as f64
}

/// Renders the scene. Deterministic given the spec (including its seed).
pub fn render(spec: &SyntheticEyeSpec) -> Result<(GrayImage, GroundTruth), SynthError> {
    spec.validate()?;
    let lids = Lids::new(spec);
    let (ox, oy) = spec.scene_offset;
    let img = GrayImage::from_fn(spec.width, spec.height, |x, y| {
        let mut v = scene_value(spec, &lids, x as f64, y as f64);
        if spec.noise_sigma > 0.0 {
            v += spec.noise_sigma * gaussian(spec.seed, x as i64 - ox, y as i64 - oy);
        }
        v.round().clamp(0.0, 255.0) as u8
    });
    Ok((img, spec.ground_truth()))
}

/// The eye-opening mask of a spec (true where sclera/iris/pupil are drawn).
pub fn opening_mask(spec: &SyntheticEyeSpec) -> Vec<bool> {
    let lids = Lids::new(spec);
    (0..spec.width * spec.height)
        .map(|i| {
            let (x, y) = ((i % spec.width) as f64, (i / spec.width) as f64);
            lids.within(x) && y >= lids.upper(x) && y <= lids.lower(x)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureMode {
    HeavyOcclusion,
    OffFrameIris,
}

/// Scenes of the kind the tracker is expected to reject.
pub fn render_failure_case(spec: &SyntheticEyeSpec, mode: FailureMode) -> Result<GrayImage, SynthError> {
    let mut s = spec.clone();
    match mode {
        FailureMode::HeavyOcclusion => s.eyelid_coverage = s.eyelid_coverage.max(0.6),
        FailureMode::OffFrameIris => {
            // iris center past the temporal corner: most of it under skin
            s.iris_center.x = s.corner_temporal.x + 0.2 * s.iris_radius;
            s.iris_center.y = s.corner_temporal.y;
        }
    }
    Ok(render(&s)?.0)
}

/// One rendered gaze target.
#[derive(Clone, Debug)]
pub struct SweepFrame {
    pub spec: SyntheticEyeSpec,
    pub image: GrayImage,
    pub truth: GroundTruth,
    pub target: Point,
}

/// Iris-center spec for a subject looking at `target` (screen pixels) when
/// the iris at `base.iris_center` corresponds to looking at `reference`.
pub fn spec_for_target(
    base: &SyntheticEyeSpec,
    model: &EyeballModel,
    screen: &ScreenGeometry,
    reference: Point,
    target: Point,
) -> Result<SyntheticEyeSpec, SynthError> {
    let unreachable = |reason: &str| SynthError::TargetUnreachable {
        x: target.x,
        y: target.y,
        reason: reason.to_string(),
    };
    let g = screen.to_gaze_mm(target, reference);
    let delta = delta_from_gaze(g, model);
    if !(delta.x.abs() < model.r_ball && delta.y.abs() < model.r_ball) {
        return Err(unreachable("iris displacement exceeds the eyeball radius"));
    }
    let px_per_mm = base.iris_radius / model.r_iris_mm;
    let mut spec = base.clone();
    spec.iris_center = Point::new(
        base.iris_center.x + delta.x * px_per_mm,
        base.iris_center.y - delta.y * px_per_mm,
    );
    let (left, right) = (base.corner_nasal.x, base.corner_temporal.x);
    if spec.iris_center.x - spec.iris_radius <= left || spec.iris_center.x + spec.iris_radius >= right {
        return Err(unreachable("iris would leave the eye opening"));
    }
    spec.validate().map_err(|e| unreachable(&e.to_string()))?;
    Ok(spec)
}

/// Renders one image per gaze target. The base spec's iris position is the
/// reference gaze, looking at the screen center.
pub fn render_gaze_sweep(
    base: &SyntheticEyeSpec,
    model: &EyeballModel,
    targets: &[Point],
    screen: &ScreenGeometry,
) -> Result<Vec<SweepFrame>, SynthError> {
    targets
        .iter()
        .enumerate()
        .map(|(i, &target)| {
            let mut spec = spec_for_target(base, model, screen, screen.center(), target)?;
            spec.seed = base.seed.wrapping_add(i as u64);
            let (image, truth) = render(&spec)?;
            Ok(SweepFrame {
                spec,
                image,
                truth,
                target,
            })
        })
        .collect()
}

/// `nx` x `ny` grid of targets spread over the central `span` fraction of
/// the screen.
pub fn target_grid(screen: &ScreenGeometry, nx: usize, ny: usize, span: f64) -> Vec<Point> {
    let axis = |n: usize, size: f64| -> Vec<f64> {
        if n == 1 {
            return vec![size / 2.0];
        }
        let lo = (1.0 - span) / 2.0;
        (0..n).map(|i| size * (lo + span * i as f64 / (n - 1) as f64)).collect()
    };
    let xs = axis(nx, screen.width as f64);
    let ys = axis(ny, screen.height as f64);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| Point::new(x, y)))
        .collect()
}
