//! Small geometric value types shared across the pipeline.

use serde::{Deserialize, Serialize};

/// A point in image or screen coordinates, subpixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

/// Pixel rectangle with inclusive bounds on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl Rect {
    pub const fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> usize {
        self.x_max + 1 - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max + 1 - self.y_min
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    /// Containment for subpixel coordinates, treating each pixel as a unit
    /// square centered on its integer coordinate.
    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x_min as f64 - 0.5
            && p.x <= self.x_max as f64 + 0.5
            && p.y >= self.y_min as f64 - 0.5
            && p.y <= self.y_max as f64 + 0.5
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) as f64 / 2.0,
            (self.y_min + self.y_max) as f64 / 2.0,
        )
    }

    /// Maps a box on a grid downsampled by `factor` back onto the full grid,
    /// covering every source pixel of the boundary blocks, then grows it by
    /// `pad` pixels and clips it to `width` x `height`.
    pub fn upscaled(&self, factor: usize, pad: usize, width: usize, height: usize) -> Rect {
        Rect {
            x_min: (self.x_min * factor).saturating_sub(pad),
            y_min: (self.y_min * factor).saturating_sub(pad),
            x_max: ((self.x_max + 1) * factor - 1 + pad).min(width - 1),
            y_max: ((self.y_max + 1) * factor - 1 + pad).min(height - 1),
        }
    }

    /// Intersection of two rectangles, `None` when they do not overlap.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            x_min: self.x_min.max(other.x_min),
            y_min: self.y_min.max(other.y_min),
            x_max: self.x_max.min(other.x_max),
            y_max: self.y_max.min(other.y_max),
        };
        (r.x_min <= r.x_max && r.y_min <= r.y_max).then_some(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upscale_covers_blocks() {
        let r = Rect::new(2, 3, 4, 5).upscaled(8, 0, 640, 480);
        assert_eq!(r, Rect::new(16, 24, 39, 47));
        let padded = Rect::new(0, 0, 79, 59).upscaled(8, 8, 640, 480);
        assert_eq!(padded, Rect::new(0, 0, 639, 479));
    }

    #[test]
    fn intersection() {
        let a = Rect::new(0, 0, 10, 10);
        assert_eq!(a.intersect(&Rect::new(5, 5, 20, 20)), Some(Rect::new(5, 5, 10, 10)));
        assert_eq!(a.intersect(&Rect::new(11, 0, 20, 20)), None);
    }
}
