//! Iris localisation: eye-region selection, coarse window scan, zigzag
//! boundary sampling and the double algebraic circle fit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Rect};
use crate::imgproc::{BinaryImage, GrayImage, Region};

#[derive(Debug, Error, PartialEq)]
pub enum IrisError {
    #[error("found {found} foreground regions, need at least two (eyebrow and eye)")]
    InsufficientRegions { found: usize },
    #[error("eye region is {width} px wide, need at least 7 for the iris window")]
    EyeRegionTooSmall { width: usize },
    #[error("no dark pixel in the seed column")]
    NoSamples,
    #[error("samples are degenerate (collinear, coincident or too few)")]
    DegenerateSamples,
    #[error("only {remaining} samples survive outlier removal")]
    TooFewInliers { remaining: usize },
}

/// Iris model: center `(a, b)` and radius `r`, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub a: f64,
    pub b: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(a: f64, b: f64, r: f64) -> Self {
        Self { a, b, r }
    }

    pub fn center(&self) -> Point {
        Point::new(self.a, self.b)
    }

    /// Signed geometric residual `dist(p, center) - r`.
    pub fn residual(&self, p: &Point) -> f64 {
        p.distance(&self.center()) - self.r
    }

    /// Geometric least-squares objective: sum of squared residuals.
    pub fn geometric_cost(&self, samples: &[Point]) -> f64 {
        samples.iter().map(|p| self.residual(p).powi(2)).sum()
    }
}

/// Eye and eyebrow boxes located on the coarse segmentation, mapped back to
/// full resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyeRegion {
    pub bounding_box: Rect,
    pub eyebrow_box: Rect,
    /// The eye box on the downsampled grid.
    pub coarse_box: Rect,
    pub threshold: u8,
    pub scale: usize,
}

/// Moment sums of the normal equations for the algebraic circle fit.
///
/// Unknowns are `B = -2a`, `C = -2b`, `D = a² + b² - R²` and the system is
///
/// ```text
/// | Mxx Mxy Mx | |B|   |-Mxz|
/// | Mxy Myy My | |C| = |-Myz|
/// | Mx  My  n  | |D|   |-Mz |
/// ```
///
/// with `z = x² + y²`. Coordinates are taken relative to `origin` (the sample
/// centroid) so the sums stay well scaled; the fitted center is shifted back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MomentSystem {
    pub origin: Point,
    pub mxx: f64,
    pub mxy: f64,
    pub myy: f64,
    pub mx: f64,
    pub my: f64,
    pub mxz: f64,
    pub myz: f64,
    pub mz: f64,
    pub n: f64,
}

impl MomentSystem {
    pub fn from_samples(samples: &[Point]) -> Self {
        let n = samples.len() as f64;
        let origin = if samples.is_empty() {
            Point::default()
        } else {
            let sx: f64 = samples.iter().map(|p| p.x).sum();
            let sy: f64 = samples.iter().map(|p| p.y).sum();
            Point::new(sx / n, sy / n)
        };
        let mut m = MomentSystem {
            origin,
            n,
            ..Default::default()
        };
        for p in samples {
            let (x, y) = (p.x - origin.x, p.y - origin.y);
            let z = x * x + y * y;
            m.mxx += x * x;
            m.mxy += x * y;
            m.myy += y * y;
            m.mx += x;
            m.my += y;
            m.mxz += x * z;
            m.myz += y * z;
            m.mz += z;
        }
        m
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.mxx, self.mxy, self.mx],
            [self.mxy, self.myy, self.my],
            [self.mx, self.my, self.n],
        ]
    }

    pub fn rhs(&self) -> [f64; 3] {
        [-self.mxz, -self.myz, -self.mz]
    }

    /// Solves for `(B, C, D)` by Cholesky decomposition.
    pub fn solve(&self) -> Option<[f64; 3]> {
        cholesky_solve(self.matrix(), self.rhs())
    }
}

/// Solves `A x = rhs` for symmetric positive-definite 3x3 `A`. Returns
/// `None` when a pivot is not positive relative to the matrix scale.
fn cholesky_solve(a: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
    let tol = scale * 1e-12;
    let mut l = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > tol) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    // forward then back substitution
    let mut y = [0.0; 3];
    for i in 0..3 {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (rhs[i] - s) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

/// Algebraic (Kåsa) circle fit minimising `Σ (z + Bx + Cy + D)²`.
pub fn fit_circle_algebraic(samples: &[Point]) -> Result<Circle, IrisError> {
    if samples.len() < 3 {
        return Err(IrisError::DegenerateSamples);
    }
    let m = MomentSystem::from_samples(samples);
    let [b_coef, c_coef, d_coef] = m.solve().ok_or(IrisError::DegenerateSamples)?;
    let (a, b) = (-b_coef / 2.0, -c_coef / 2.0);
    let r2 = a * a + b * b - d_coef;
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(IrisError::DegenerateSamples);
    }
    Ok(Circle::new(a + m.origin.x, b + m.origin.y, r2.sqrt()))
}

/// Outcome of [`double_circle_fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleFit {
    /// Fit on all samples.
    pub first: Circle,
    /// Refit on the samples that survived noise removal.
    pub circle: Circle,
    pub inliers: Vec<Point>,
    pub outliers: Vec<Point>,
}

/// Fit, drop samples lying far outside the first circle, refit.
///
/// A sample is noise when its distance from the first center exceeds the
/// first radius by more than `max(σ, 0.1 R)`, σ being the RMS geometric
/// residual of the first fit. Exactly one removal round.
pub fn double_circle_fit(samples: &[Point]) -> Result<DoubleFit, IrisError> {
    if samples.len() < 6 {
        return Err(IrisError::DegenerateSamples);
    }
    let first = fit_circle_algebraic(samples)?;
    let sigma = (samples.iter().map(|p| first.residual(p).powi(2)).sum::<f64>() / samples.len() as f64).sqrt();
    let limit = sigma.max(0.1 * first.r);
    let (inliers, outliers): (Vec<Point>, Vec<Point>) = samples.iter().partition(|p| first.residual(p) <= limit);
    if inliers.len() < 3 {
        return Err(IrisError::TooFewInliers {
            remaining: inliers.len(),
        });
    }
    let circle = if outliers.is_empty() {
        first
    } else {
        fit_circle_algebraic(&inliers)?
    };
    Ok(DoubleFit {
        first,
        circle,
        inliers,
        outliers,
    })
}

/// Picks eyebrow and eye among the two largest regions: the upper one is the
/// eyebrow. Boxes are mapped to full resolution covering whole blocks and
/// padded by one block so the eye corners are not clipped by block rounding.
pub fn locate_eye_region(
    bin: &BinaryImage,
    regions: &[Region],
    scale: usize,
    threshold: u8,
) -> Result<EyeRegion, IrisError> {
    if regions.len() < 2 {
        return Err(IrisError::InsufficientRegions { found: regions.len() });
    }
    let (r0, r1) = (&regions[0], &regions[1]);
    let (brow, eye) = if r0.centroid.1 <= r1.centroid.1 {
        (r0, r1)
    } else {
        (r1, r0)
    };
    let (w, h) = (bin.width() * scale, bin.height() * scale);
    Ok(EyeRegion {
        bounding_box: eye.bounding_box.upscaled(scale, scale, w, h),
        eyebrow_box: brow.bounding_box.upscaled(scale, 0, w, h),
        coarse_box: eye.bounding_box,
        threshold,
        scale,
    })
}

/// Winning position of the iris window on the coarse grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IrisWindow {
    /// Left column of the window.
    pub x: usize,
    pub width: usize,
    /// Foreground pixels inside the window.
    pub count: usize,
}

impl IrisWindow {
    pub fn center(&self) -> f64 {
        self.x as f64 + (self.width as f64 - 1.0) / 2.0
    }
}

/// Iris window width for an eye box of the given width: 15 % of it.
pub fn window_width(eye_width: usize) -> usize {
    (0.15 * eye_width as f64).round() as usize
}

/// Slides a full-height window across `eye` (coarse coordinates) and returns
/// the position holding the most foreground pixels; ties go to the left.
pub fn scan_iris_window(bin: &BinaryImage, eye: &Rect) -> Result<IrisWindow, IrisError> {
    if eye.width() < 7 {
        return Err(IrisError::EyeRegionTooSmall { width: eye.width() });
    }
    let width = window_width(eye.width());
    let columns: Vec<usize> = (eye.x_min..=eye.x_max)
        .map(|x| (eye.y_min..=eye.y_max).filter(|&y| bin.get(x, y)).count())
        .collect();
    let mut count: usize = columns[..width].iter().sum();
    let mut best = IrisWindow {
        x: eye.x_min,
        width,
        count,
    };
    for i in 1..=columns.len() - width {
        count = count + columns[i + width - 1] - columns[i - 1];
        if count > best.count {
            best = IrisWindow {
                x: eye.x_min + i,
                width,
                count,
            };
        }
    }
    Ok(best)
}

/// Coarse seed for the boundary scan: the window's center column, at the
/// middle of the longest foreground run in that column (the iris rather than
/// the thin lash line above it).
pub fn coarse_seed(bin: &BinaryImage, eye: &Rect, window: &IrisWindow) -> (usize, usize) {
    let col = window.x + (window.width - 1) / 2;
    let (mut best_start, mut best_len) = ((eye.y_min + eye.y_max) / 2, 0);
    let mut run_start = None;
    for y in eye.y_min..=eye.y_max + 1 {
        let fg = y <= eye.y_max && bin.get(col, y);
        match (fg, run_start) {
            (true, None) => run_start = Some(y),
            (false, Some(s)) => {
                if y - s > best_len {
                    best_len = y - s;
                    best_start = s;
                }
                run_start = None;
            }
            _ => {}
        }
    }
    (col, best_start + best_len.saturating_sub(1) / 2)
}

/// Border position of one side during the row scan.
///
/// A dark disk is convex, so moving away from the start row its border's
/// outward step per row can only decrease. A step exceeding the smallest one
/// seen so far by more than [`CONVEXITY_SLACK`] means the scan has run into
/// something attached to the iris (a lash line, a lid shadow) and the side
/// stops there.
struct BorderTrack {
    pos: usize,
    min_step: i64,
    active: bool,
}

/// Tolerance of the convexity check, pixels. Row quantisation alone can
/// raise a step by one.
const CONVEXITY_SLACK: i64 = 2;

impl BorderTrack {
    fn new(pos: usize) -> Self {
        Self {
            pos,
            min_step: i64::MAX,
            active: true,
        }
    }

    fn advance(&mut self, x: usize, left: bool) {
        let step = if left {
            self.pos as i64 - x as i64
        } else {
            x as i64 - self.pos as i64
        };
        if self.min_step != i64::MAX && step > self.min_step + CONVEXITY_SLACK {
            self.active = false;
            return;
        }
        self.min_step = self.min_step.min(step);
        self.pos = x;
    }
}

/// Zigzag iris-border sampling on the full-resolution image.
///
/// From the seed a vertical scan descends through dark pixels to the lower
/// iris border. From that row the scan line is raised (and, symmetrically,
/// lowered) one pixel at a time; on each new row the left and right border
/// positions are found starting from the previous row's positions, extending
/// outward while the pixel is dark or stepping inward until a dark pixel is
/// met. A side stops when the border would jump more than `max_jump` pixels
/// in one row, when its outward steps stop shrinking (see [`BorderTrack`]),
/// when the two borders cross, or when the scan leaves `eye`.
/// Interior noise is never visited because the path hugs the outer border.
///
/// Samples sit on the dark/bright pixel edge, i.e. half a pixel outside the
/// last dark pixel of the row.
pub fn extract_samples(
    img: &GrayImage,
    threshold: u8,
    seed: (usize, usize),
    eye: &Rect,
    max_jump: usize,
) -> Result<Vec<Point>, IrisError> {
    let dark = |x: usize, y: usize| img.get(x, y) <= threshold;
    let (sx, sy) = seed;
    if !eye.contains(sx, sy) {
        return Err(IrisError::NoSamples);
    }
    // nearest dark pixel in the seed column
    let start_y = (0..=eye.height())
        .flat_map(|d| [sy.checked_sub(d), sy.checked_add(d)])
        .flatten()
        .find(|&y| eye.contains(sx, y) && dark(sx, y))
        .ok_or(IrisError::NoSamples)?;

    let mut y0 = start_y;
    while y0 < eye.y_max && dark(sx, y0 + 1) {
        y0 += 1;
    }
    let mut left = sx;
    while left > eye.x_min && dark(left - 1, y0) {
        left -= 1;
    }
    let mut right = sx;
    while right < eye.x_max && dark(right + 1, y0) {
        right += 1;
    }

    let mut samples = vec![
        Point::new(left as f64 - 0.5, y0 as f64),
        Point::new(right as f64 + 0.5, y0 as f64),
    ];
    let follow = |row: usize, prev: usize, outward_left: bool| -> Option<usize> {
        let step_out = |x: usize| {
            if outward_left {
                x.checked_sub(1).filter(|&v| v >= eye.x_min)
            } else {
                Some(x + 1).filter(|&v| v <= eye.x_max)
            }
        };
        let step_in = |x: usize| {
            if outward_left {
                Some(x + 1).filter(|&v| v <= eye.x_max)
            } else {
                x.checked_sub(1).filter(|&v| v >= eye.x_min)
            }
        };
        let mut x = prev;
        if dark(x, row) {
            for _ in 0..=max_jump {
                match step_out(x) {
                    Some(nx) if dark(nx, row) => x = nx,
                    Some(_) => return Some(x),
                    // dark up to the eye-region edge: not an iris border
                    None => return None,
                }
            }
            None
        } else {
            for _ in 0..max_jump {
                x = step_in(x)?;
                if dark(x, row) {
                    return Some(x);
                }
            }
            None
        }
    };

    for upward in [true, false] {
        let mut sides = [BorderTrack::new(left), BorderTrack::new(right)];
        let mut row = y0;
        while sides.iter().any(|s| s.active) {
            let next = if upward {
                row.checked_sub(1).filter(|&v| v >= eye.y_min)
            } else {
                Some(row + 1).filter(|&v| v <= eye.y_max)
            };
            let Some(next) = next else { break };
            let found = [
                sides[0].active.then(|| follow(next, sides[0].pos, true)).flatten(),
                sides[1].active.then(|| follow(next, sides[1].pos, false)).flatten(),
            ];
            for (k, f) in found.iter().enumerate() {
                if sides[k].active {
                    match *f {
                        Some(x) => sides[k].advance(x, k == 0),
                        None => sides[k].active = false,
                    }
                }
            }
            let (l, r) = (sides[0].pos, sides[1].pos);
            if l > r {
                break;
            }
            if sides[0].active && found[0].is_some() {
                samples.push(Point::new(l as f64 - 0.5, next as f64));
            }
            if sides[1].active && found[1].is_some() {
                samples.push(Point::new(r as f64 + 0.5, next as f64));
            }
            row = next;
        }
    }
    Ok(samples)
}
