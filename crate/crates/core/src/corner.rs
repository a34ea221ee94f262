//! Eye-corner detection with the vertical variance projection function.
//!
//! Inside a search box beside the iris, the per-column intensity variance
//! stays high while the column crosses the eyelids and collapses once it
//! passes the corner. The corner column is where that variance changes the
//! most; its row comes from the eyelid traced with Sobel gradients.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Rect};
use crate::imgproc::{sobel_region, GrayImage};
use crate::iris::{Circle, EyeRegion};

/// Columns whose variance never exceeds this (intensity²) carry no structure.
pub const VARIANCE_FLOOR: f64 = 4.0;

/// Past a real corner the median column variance drops below this fraction
/// of the corner column's variance.
pub const COLLAPSE_RATIO: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum CornerError {
    #[error("projection range is empty or outside the image")]
    EmptyRange,
    #[error("corner search area is empty after clamping")]
    AreaOutsideImage,
    #[error("variance profile is flat (max {max_variance:.2})")]
    NoCornerFound { max_variance: f64 },
    /// The strongest variance change is not followed by low variance, as
    /// when the corner lies outside the search area.
    #[error("variance does not collapse past column {column} ({inner:.1} → {outer:.1})")]
    NoCollapse { column: usize, inner: f64, outer: f64 },
}

/// Which eye corner to look for. Temporal is toward larger image x.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Nasal,
    #[default]
    Temporal,
}

impl Side {
    /// +1 when the corner lies toward larger x.
    pub fn direction(self) -> isize {
        match self {
            Side::Temporal => 1,
            Side::Nasal => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerPoint {
    pub x: f64,
    pub y: f64,
    pub side: Side,
}

impl CornerPoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VpfProfile {
    pub x_range: RangeInclusive<usize>,
    pub y_range: RangeInclusive<usize>,
    /// Per-column mean intensity over the row interval.
    pub mean: Vec<f64>,
    /// Per-column intensity variance over the row interval.
    pub variance: Vec<f64>,
    /// Forward differences of `variance`, one shorter.
    pub derivative: Vec<f64>,
}

/// Vertical variance projection over the given columns and rows (both
/// inclusive).
pub fn vpf(
    img: &GrayImage,
    x_range: RangeInclusive<usize>,
    y_range: RangeInclusive<usize>,
) -> Result<VpfProfile, CornerError> {
    let (&x1, &x2) = (x_range.start(), x_range.end());
    let (&y1, &y2) = (y_range.start(), y_range.end());
    if x2 < x1 || y2 <= y1 || x2 >= img.width() || y2 >= img.height() {
        return Err(CornerError::EmptyRange);
    }
    let n = (y2 - y1 + 1) as f64;
    let mut mean = Vec::with_capacity(x2 - x1 + 1);
    let mut variance = Vec::with_capacity(x2 - x1 + 1);
    for x in x1..=x2 {
        let m = (y1..=y2).map(|y| img.get(x, y) as f64).sum::<f64>() / n;
        let v = (y1..=y2).map(|y| (img.get(x, y) as f64 - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        variance.push(v);
    }
    let derivative = variance.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(VpfProfile {
        x_range,
        y_range,
        mean,
        variance,
        derivative,
    })
}

/// Search box beside the iris: starting 1.5 R from the center, 2 R wide,
/// 2 R tall around the iris center row, clamped to the eye region.
pub fn corner_search_area(iris: &Circle, eye: &EyeRegion, side: Side) -> Result<Rect, CornerError> {
    let (near, far) = match side {
        Side::Temporal => (iris.a + 1.5 * iris.r, iris.a + 3.5 * iris.r),
        Side::Nasal => (iris.a - 3.5 * iris.r, iris.a - 1.5 * iris.r),
    };
    let clamp = |v: f64, lo: usize, hi: usize| -> Option<usize> {
        let v = v.round();
        if !v.is_finite() {
            return None;
        }
        Some(v.clamp(lo as f64, hi as f64) as usize)
    };
    let b = &eye.bounding_box;
    let area = (|| {
        let x_min = clamp(near, b.x_min, b.x_max)?;
        let x_max = clamp(far, b.x_min, b.x_max)?;
        let y_min = clamp(iris.b - iris.r, b.y_min, b.y_max)?;
        let y_max = clamp(iris.b + iris.r, b.y_min, b.y_max)?;
        // clamping collapses a box lying wholly outside onto the edge
        let outside = far < b.x_min as f64 || near > b.x_max as f64;
        (!outside && x_min < x_max && y_min < y_max).then_some(Rect::new(x_min, y_min, x_max, y_max))
    })();
    area.ok_or(CornerError::AreaOutsideImage)
}

/// Per column of `area`, the row (absolute) of maximum Sobel magnitude.
pub fn eyelid_trace(img: &GrayImage, area: &Rect) -> Vec<usize> {
    let grad = sobel_region(img, area);
    (0..area.width())
        .map(|cx| {
            let mut best = (0, f64::NEG_INFINITY);
            for cy in 0..area.height() {
                let m = grad.magnitude_at(cx, cy);
                if m > best.1 {
                    best = (cy, m);
                }
            }
            area.y_min + best.0
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn median3(mut v: [usize; 3]) -> usize {
    v.sort_unstable();
    v[1]
}

/// Locates the eye corner on `side` of the iris.
///
/// The corner column is the end of the adjacent column pair with the largest
/// absolute variance change that still has the higher variance (the last
/// column with eyelid structure). The row is the eyelid position there,
/// median-smoothed over that column and the two next to it on the eye side,
/// since the column itself also picks up the horizontal edge where the lids
/// end.
pub fn detect_corner(img: &GrayImage, iris: &Circle, eye: &EyeRegion, side: Side) -> Result<CornerPoint, CornerError> {
    let area = corner_search_area(iris, eye, side)?;
    let profile = vpf(img, area.x_min..=area.x_max, area.y_min..=area.y_max)?;
    let max_variance = profile.variance.iter().cloned().fold(0.0, f64::max);
    if max_variance < VARIANCE_FLOOR || profile.derivative.is_empty() {
        return Err(CornerError::NoCornerFound { max_variance });
    }
    let mut steepest = 0;
    for (i, d) in profile.derivative.iter().enumerate() {
        if d.abs() > profile.derivative[steepest].abs() {
            steepest = i;
        }
    }
    let col = if profile.variance[steepest + 1] > profile.variance[steepest] {
        steepest + 1
    } else {
        steepest
    };

    let outward: Vec<f64> = match side.direction() {
        d if d > 0 => profile.variance[col + 1..].to_vec(),
        _ => profile.variance[..col].to_vec(),
    };
    let inner = profile.variance[col];
    let empty = outward.is_empty();
    let outer = if empty { inner } else { median(outward) };
    if empty || outer > COLLAPSE_RATIO * inner {
        return Err(CornerError::NoCollapse {
            column: area.x_min + col,
            inner,
            outer,
        });
    }

    let trace = eyelid_trace(img, &area);
    let last = trace.len() as isize - 1;
    let inward = -side.direction();
    let at = |k: isize| trace[(col as isize + k * inward).clamp(0, last) as usize];
    let row = median3([at(0), at(1), at(2)]);

    Ok(CornerPoint {
        x: (area.x_min + col) as f64,
        y: row as f64,
        side,
    })
}
