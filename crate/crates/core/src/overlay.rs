//! Diagnostic overlay: the detection stages drawn over the input image.

use crate::geometry::{Point, Rect};
use crate::imgproc::GrayImage;
use crate::iris::Circle;
use crate::pipeline::Detection;

pub const EYE_BOX: [u8; 3] = [0, 200, 0];
pub const FIRST_FIT: [u8; 3] = [0, 128, 255];
pub const FINAL_FIT: [u8; 3] = [255, 0, 255];
pub const INLIER: [u8; 3] = [255, 255, 0];
pub const OUTLIER: [u8; 3] = [255, 0, 0];
pub const CORNER: [u8; 3] = [0, 255, 255];

/// RGB drawing surface, row-major, 3 bytes per pixel.
#[derive(Clone, Debug)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Canvas {
    pub fn from_gray(img: &GrayImage) -> Self {
        let rgb = img.pixels().iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: img.width(),
            height: img.height(),
            rgb,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// RGBA bytes with opaque alpha, as canvas `ImageData` expects.
    pub fn to_rgba(&self) -> Vec<u8> {
        self.rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
    }

    fn plot(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = 3 * (y as usize * self.width + x as usize);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    pub fn rect(&mut self, r: &Rect, c: [u8; 3]) {
        let (x0, y0, x1, y1) = (r.x_min as i64, r.y_min as i64, r.x_max as i64, r.y_max as i64);
        for x in x0..=x1 {
            self.plot(x, y0, c);
            self.plot(x, y1, c);
        }
        for y in y0..=y1 {
            self.plot(x0, y, c);
            self.plot(x1, y, c);
        }
    }

    /// Circle outline, dense enough to leave no gaps.
    pub fn circle(&mut self, circle: &Circle, c: [u8; 3]) {
        let n = ((4.0 * std::f64::consts::PI * circle.r).ceil() as usize).clamp(16, 100_000);
        for k in 0..n {
            let t = k as f64 * std::f64::consts::TAU / n as f64;
            let x = circle.a + circle.r * t.cos();
            let y = circle.b + circle.r * t.sin();
            self.plot(x.round() as i64, y.round() as i64, c);
        }
    }

    pub fn dot(&mut self, p: Point, c: [u8; 3]) {
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                self.plot(x + dx, y + dy, c);
            }
        }
    }

    pub fn cross(&mut self, p: Point, arm: i64, c: [u8; 3]) {
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        for d in -arm..=arm {
            self.plot(x + d, y, c);
            self.plot(x, y + d, c);
        }
    }
}

/// Eye box, boundary samples (inliers yellow, rejected red), the fit on all
/// samples, the refit and the corner.
pub fn draw(img: &GrayImage, det: &Detection) -> Canvas {
    let mut canvas = Canvas::from_gray(img);
    if let Some(eye) = &det.eye {
        canvas.rect(&eye.bounding_box, EYE_BOX);
    }
    if let Some(fit) = &det.fit {
        canvas.circle(&fit.first, FIRST_FIT);
        canvas.circle(&fit.circle, FINAL_FIT);
        for &p in &fit.outliers {
            canvas.dot(p, OUTLIER);
        }
        for &p in &fit.inliers {
            canvas.dot(p, INLIER);
        }
    } else {
        for &p in &det.samples {
            canvas.dot(p, OUTLIER);
        }
    }
    if let Some(c) = &det.corner {
        canvas.cross(c.point(), 6, CORNER);
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_outline_is_closed_and_on_radius() {
        let mut c = Canvas::from_gray(&GrayImage::filled(100, 100, 0));
        let circle = Circle::new(50.3, 49.7, 20.0);
        c.circle(&circle, FINAL_FIT);
        let mut n = 0;
        for y in 0..100 {
            for x in 0..100 {
                if c.get(x, y) == FINAL_FIT {
                    n += 1;
                    let d = Point::new(x as f64, y as f64).distance(&circle.center());
                    assert!((d - 20.0).abs() <= 0.75, "({x},{y}) at {d}");
                }
            }
        }
        // an 8-connected ring of radius r has about 2πr·(4/π)/2 pixels
        assert!(n > 100, "{n}");
    }

    #[test]
    fn shapes_clip_at_the_border() {
        let mut c = Canvas::from_gray(&GrayImage::filled(10, 10, 0));
        c.circle(&Circle::new(0.0, 0.0, 30.0), OUTLIER);
        c.cross(Point::new(-3.0, 9.0), 6, CORNER);
        c.rect(&Rect::new(0, 0, 9, 9), EYE_BOX);
        assert_eq!(c.get(0, 0), EYE_BOX);
        assert_eq!(c.get(3, 9), EYE_BOX);
        assert_eq!(c.get(2, 8), [0, 0, 0]);
    }
}
