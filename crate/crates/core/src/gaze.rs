//! Eyeball-model gaze estimation and the two-cross screen calibration.
//!
//! The eye is a sphere of radius `r_ball` seen from the camera; rotating it
//! by θ moves the iris center by `r_ball·sin θ` in the image plane and moves
//! the gaze point on a screen at distance `d` by `d·tan θ`. Horizontal and
//! vertical axes are handled independently. All displacements are taken
//! from the eye corner, so head translation cancels out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corner::CornerPoint;
use crate::geometry::Point;
use crate::iris::Circle;

#[derive(Debug, Error, PartialEq)]
pub enum GazeError {
    #[error("no calibration available")]
    NotCalibrated,
    #[error("calibration crosses coincide on the {axis} axis")]
    DegenerateCalibration { axis: &'static str },
    #[error("invalid eyeball model: {0}")]
    InvalidModel(String),
}

/// Geometric constants, millimeters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EyeballModel {
    /// Eyeball radius, 12–13 mm.
    pub r_ball: f64,
    /// Eyeball surface to screen distance.
    pub d: f64,
    /// Physical iris radius, used to convert pixels to millimeters.
    pub r_iris_mm: f64,
}

impl Default for EyeballModel {
    fn default() -> Self {
        Self {
            r_ball: 12.5,
            d: 650.0,
            r_iris_mm: 5.9,
        }
    }
}

impl EyeballModel {
    pub fn validate(&self) -> Result<(), GazeError> {
        if !(12.0..=13.0).contains(&self.r_ball) {
            return Err(GazeError::InvalidModel(format!(
                "r_ball {} outside [12, 13] mm",
                self.r_ball
            )));
        }
        if !(self.d > 0.0) {
            return Err(GazeError::InvalidModel(format!("d must be positive, got {}", self.d)));
        }
        if !(self.r_iris_mm > 0.0) {
            return Err(GazeError::InvalidModel(format!(
                "r_iris_mm must be positive, got {}",
                self.r_iris_mm
            )));
        }
        Ok(())
    }
}

/// Screen size in pixels and the physical pixel pitch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenGeometry {
    pub width: u32,
    pub height: u32,
    pub mm_per_px: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            mm_per_px: 0.25,
        }
    }
}

impl ScreenGeometry {
    pub fn center(&self) -> Point {
        Point::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Bottom-left and top-right calibration crosses, `margin` (fraction of
    /// each dimension) in from the edges.
    pub fn calibration_crosses(&self, margin: f64) -> [Point; 2] {
        let (w, h) = (self.width as f64, self.height as f64);
        [
            Point::new(margin * w, (1.0 - margin) * h),
            Point::new((1.0 - margin) * w, margin * h),
        ]
    }

    /// Gaze displacement in millimeters (up positive) of a screen pixel
    /// relative to `reference`.
    pub fn to_gaze_mm(&self, target: Point, reference: Point) -> Point {
        Point::new(
            (target.x - reference.x) * self.mm_per_px,
            -(target.y - reference.y) * self.mm_per_px,
        )
    }
}

/// Gaze displacement on the screen plane, millimeters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaze {
    pub g: Point,
    /// Set when |Δ| reached r_ball on some axis and was clamped.
    pub clamped: bool,
}

/// Learned mapping from corner→iris vectors to screen pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    /// Corner→iris vector at the reference gaze, pixels.
    pub reference_vector: Point,
    pub px_to_mm: f64,
    /// Screen pixels per millimeter of gaze displacement, per axis.
    pub alpha: Point,
    /// Screen position of the reference gaze, pixels.
    pub beta: Point,
    pub model: EyeballModel,
}

impl CalibrationMap {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Where a gaze lands on the screen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScreenGaze {
    OnScreen(Point),
    /// Mapped position outside the screen bounds.
    OffScreen(Point),
}

impl ScreenGaze {
    pub fn point(&self) -> Point {
        match *self {
            ScreenGaze::OnScreen(p) | ScreenGaze::OffScreen(p) => p,
        }
    }

    pub fn is_on_screen(&self) -> bool {
        matches!(self, ScreenGaze::OnScreen(_))
    }
}

/// Corner→iris-center vector in pixels.
pub fn corner_to_iris(iris: &Circle, corner: &CornerPoint) -> Point {
    iris.center() - corner.point()
}

/// Iris displacement from the reference gaze, in millimeters, up positive.
pub fn displacement(iris: &Circle, corner: &CornerPoint, cal: Option<&CalibrationMap>) -> Result<Point, GazeError> {
    let cal = cal.ok_or(GazeError::NotCalibrated)?;
    Ok(delta_from_vector(corner_to_iris(iris, corner), cal))
}

fn delta_from_vector(v: Point, cal: &CalibrationMap) -> Point {
    let d = v - cal.reference_vector;
    Point::new(d.x * cal.px_to_mm, -d.y * cal.px_to_mm)
}

fn axis_gaze(delta: f64, model: &EyeballModel) -> (f64, bool) {
    let s = delta / model.r_ball;
    let clamped = s.abs() >= 1.0;
    let theta = s.clamp(-1.0, 1.0).asin();
    (model.d * theta.tan(), clamped)
}

/// `θ = asin(Δ / r_ball)`, `g = d·tan θ`, per axis.
pub fn gaze_from_delta(delta: Point, model: &EyeballModel) -> Gaze {
    let (gx, cx) = axis_gaze(delta.x, model);
    let (gy, cy) = axis_gaze(delta.y, model);
    Gaze {
        g: Point::new(gx, gy),
        clamped: cx || cy,
    }
}

/// Inverse of [`gaze_from_delta`]: `Δ = r_ball·sin(atan(g / d))`.
pub fn delta_from_gaze(g: Point, model: &EyeballModel) -> Point {
    let inv = |g: f64| model.r_ball * (g / model.d).atan().sin();
    Point::new(inv(g.x), inv(g.y))
}

/// Two-point per-axis solve of `screen = α·g + β`.
fn solve_axis(g0: f64, s0: f64, g1: f64, s1: f64, axis: &'static str) -> Result<(f64, f64), GazeError> {
    let dg = g1 - g0;
    if (s1 - s0).abs() < 1e-9 || dg.abs() < 1e-12 {
        return Err(GazeError::DegenerateCalibration { axis });
    }
    let alpha = (s1 - s0) / dg;
    Ok((alpha, s0 - alpha * g0))
}

/// Builds the screen mapping from two (corner→iris vector, cross position)
/// readings. The pixel scale comes from the iris radius, the reference gaze
/// is the midpoint of the two vectors.
pub fn calibrate(
    readings: [(Point, Point); 2],
    model: &EyeballModel,
    iris_radius_px: f64,
) -> Result<CalibrationMap, GazeError> {
    model.validate()?;
    if !(iris_radius_px > 0.0) {
        return Err(GazeError::InvalidModel(format!(
            "iris radius must be positive, got {iris_radius_px}"
        )));
    }
    let [(v0, s0), (v1, s1)] = readings;
    let mut cal = CalibrationMap {
        reference_vector: Point::new((v0.x + v1.x) / 2.0, (v0.y + v1.y) / 2.0),
        px_to_mm: model.r_iris_mm / iris_radius_px,
        alpha: Point::default(),
        beta: Point::default(),
        model: *model,
    };
    let g0 = gaze_from_delta(delta_from_vector(v0, &cal), model).g;
    let g1 = gaze_from_delta(delta_from_vector(v1, &cal), model).g;
    let (ax, bx) = solve_axis(g0.x, s0.x, g1.x, s1.x, "x")?;
    let (ay, by) = solve_axis(g0.y, s0.y, g1.y, s1.y, "y")?;
    cal.alpha = Point::new(ax, ay);
    cal.beta = Point::new(bx, by);
    Ok(cal)
}

/// Maps a gaze displacement to screen pixels.
pub fn to_screen(g: Point, cal: Option<&CalibrationMap>, screen: &ScreenGeometry) -> Result<ScreenGaze, GazeError> {
    let cal = cal.ok_or(GazeError::NotCalibrated)?;
    let p = Point::new(cal.alpha.x * g.x + cal.beta.x, cal.alpha.y * g.y + cal.beta.y);
    let inside = p.x >= 0.0 && p.x < screen.width as f64 && p.y >= 0.0 && p.y < screen.height as f64;
    Ok(if inside {
        ScreenGaze::OnScreen(p)
    } else {
        ScreenGaze::OffScreen(p)
    })
}

/// View angle, in degrees, subtended by an on-screen error at distance `d`.
pub fn angular_error(error_mm: f64, d: f64) -> f64 {
    (error_mm / d).atan().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corner::Side;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn corner(x: f64, y: f64) -> CornerPoint {
        CornerPoint {
            x,
            y,
            side: Side::Temporal,
        }
    }

    fn cal_with(reference: Point, px_to_mm: f64) -> CalibrationMap {
        CalibrationMap {
            reference_vector: reference,
            px_to_mm,
            alpha: Point::new(80.0, 80.0),
            beta: Point::new(960.0, 540.0),
            model: EyeballModel::default(),
        }
    }

    #[test]
    fn displacement_examples() {
        let cal = cal_with(Point::new(-100.0, 2.0), 0.2);
        let iris = Circle::new(300.0, 302.0, 40.0);
        let d = displacement(&iris, &corner(400.0, 300.0), Some(&cal)).unwrap();
        assert_eq!(d, Point::new(0.0, 0.0));
        let d = displacement(&iris, &corner(395.0, 300.0), Some(&cal)).unwrap();
        assert_relative_eq!(d.x, 1.0, epsilon = 1e-12);
        assert_eq!(d.y, 0.0);
        // looking up moves the iris up in the image: positive Δy
        let up = Circle::new(300.0, 297.0, 40.0);
        assert!(displacement(&up, &corner(400.0, 300.0), Some(&cal)).unwrap().y > 0.0);
        assert_eq!(
            displacement(&iris, &corner(400.0, 300.0), None),
            Err(GazeError::NotCalibrated)
        );
    }

    #[test]
    fn rigid_translation_cancels() {
        let cal = cal_with(Point::new(-90.0, 1.0), 0.15);
        let iris = Circle::new(310.0, 295.0, 40.0);
        let c = corner(405.0, 301.0);
        let base = displacement(&iris, &c, Some(&cal)).unwrap();
        let moved = displacement(
            &Circle::new(310.0 + 37.0, 295.0 - 21.0, 40.0),
            &corner(405.0 + 37.0, 301.0 - 21.0),
            Some(&cal),
        )
        .unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn gaze_examples() {
        let m = EyeballModel::default();
        let z = gaze_from_delta(Point::new(0.0, 0.0), &m);
        assert_eq!(z.g, Point::new(0.0, 0.0));
        assert!(!z.clamped);

        let delta = 12.5 * 10f64.to_radians().sin();
        assert_relative_eq!(delta, 2.170, epsilon = 1e-3);
        let g = gaze_from_delta(Point::new(delta, 0.0), &m);
        assert_relative_eq!(g.g.x, 650.0 * 10f64.to_radians().tan(), epsilon = 1e-9);
        assert_relative_eq!(g.g.x, 114.62, epsilon = 1e-2);

        let edge = gaze_from_delta(Point::new(12.5, 0.0), &m);
        assert!(edge.clamped);
    }

    #[test]
    fn axis_solve_example() {
        let (a, b) = solve_axis(-10.0, 48.0, 12.0, 1872.0, "x").unwrap();
        assert_relative_eq!(a, 1824.0 / 22.0, epsilon = 1e-12);
        assert_relative_eq!(a, 82.909, epsilon = 1e-3);
        assert_relative_eq!(b, 877.09, epsilon = 1e-2);
    }

    #[test]
    fn calibration_round_trip() {
        let m = EyeballModel::default();
        let readings = [
            (Point::new(-130.0, 12.0), Point::new(96.0, 1026.0)),
            (Point::new(-80.0, -14.0), Point::new(1824.0, 54.0)),
        ];
        let cal = calibrate(readings, &m, 40.0).unwrap();
        assert_relative_eq!(cal.px_to_mm, 5.9 / 40.0);
        let screen = ScreenGeometry::default();
        for (v, cross) in readings {
            let iris = Circle::new(500.0 + v.x, 300.0 + v.y, 40.0);
            let delta = displacement(&iris, &corner(500.0, 300.0), Some(&cal)).unwrap();
            let p = to_screen(gaze_from_delta(delta, &m).g, Some(&cal), &screen).unwrap();
            assert!(p.is_on_screen());
            assert_relative_eq!(p.point().x, cross.x, epsilon = 1e-9);
            assert_relative_eq!(p.point().y, cross.y, epsilon = 1e-9);
        }
        let back = CalibrationMap::from_json(&cal.to_json()).unwrap();
        assert_eq!(back, cal);
    }

    #[test]
    fn identical_crosses_are_degenerate() {
        let m = EyeballModel::default();
        let cross = Point::new(100.0, 100.0);
        assert!(matches!(
            calibrate(
                [(Point::new(-130.0, 12.0), cross), (Point::new(-80.0, -14.0), cross)],
                &m,
                40.0
            ),
            Err(GazeError::DegenerateCalibration { .. })
        ));
    }

    #[test]
    fn screen_mapping() {
        let cal = cal_with(Point::new(0.0, 0.0), 0.1);
        let screen = ScreenGeometry::default();
        let p = to_screen(Point::new(0.0, 0.0), Some(&cal), &screen).unwrap();
        assert_eq!(p, ScreenGaze::OnScreen(Point::new(960.0, 540.0)));
        let far = to_screen(Point::new(500.0, 0.0), Some(&cal), &screen).unwrap();
        assert!(!far.is_on_screen());
        assert_eq!(
            to_screen(Point::new(0.0, 0.0), None, &screen),
            Err(GazeError::NotCalibrated)
        );
    }

    #[test]
    fn view_angle_anchor() {
        assert_relative_eq!(angular_error(50.0, 650.0), 4.40, epsilon = 0.01);
        assert!((angular_error(28.0, 650.0) - 2.50).abs() < 0.05);
        assert_eq!(angular_error(0.0, 650.0), 0.0);
    }

    #[test]
    fn model_validation() {
        assert!(EyeballModel::default().validate().is_ok());
        let bad = EyeballModel {
            r_ball: 14.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn gaze_is_odd(dx in -12.4f64..12.4, dy in -12.4f64..12.4) {
            let m = EyeballModel::default();
            let a = gaze_from_delta(Point::new(dx, dy), &m).g;
            let b = gaze_from_delta(Point::new(-dx, -dy), &m).g;
            prop_assert!((a.x + b.x).abs() < 1e-9 && (a.y + b.y).abs() < 1e-9);
        }

        #[test]
        fn gaze_is_monotone(a in -12.4f64..12.4, b in -12.4f64..12.4) {
            prop_assume!(a < b);
            let m = EyeballModel::default();
            prop_assert!(gaze_from_delta(Point::new(a, 0.0), &m).g.x < gaze_from_delta(Point::new(b, 0.0), &m).g.x);
        }

        #[test]
        fn small_angle_linearization(frac in -0.1f64..0.1) {
            prop_assume!(frac.abs() > 1e-6);
            let m = EyeballModel::default();
            let delta = frac * m.r_ball;
            let g = gaze_from_delta(Point::new(delta, 0.0), &m).g.x;
            let lin = m.d / m.r_ball * delta;
            prop_assert!(((g - lin) / lin).abs() <= 0.01);
        }

        #[test]
        fn inverse_model(gx in -400.0f64..400.0, gy in -300.0f64..300.0) {
            let m = EyeballModel::default();
            let back = gaze_from_delta(delta_from_gaze(Point::new(gx, gy), &m), &m).g;
            prop_assert!((back.x - gx).abs() < 1e-9 && (back.y - gy).abs() < 1e-9);
        }
    }
}
