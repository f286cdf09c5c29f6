//! Points, the fault segment, and the admissible region inside the square
//! domain `[-1, 1] x [-1, 1]`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slip::SlipField;

/// Default margin between fault endpoints and the domain boundary.
pub const DEFAULT_DELTA_MIN: f64 = 0.1;

/// A point (or a vector) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

/// Vectors share the point representation.
pub type Vec2 = Point2;

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Counterclockwise rotation by 90 degrees.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// `w0 * a + w1 * b`, the form used for every interpolated mesh node.
    pub fn lerp2(a: Point2, w0: f64, b: Point2, w1: f64) -> Point2 {
        Point2::new(w0 * a.x + w1 * b.x, w0 * a.y + w1 * b.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2::new(a[0], a[1])
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, p: Point2) -> Point2 {
        p * self
    }
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

/// Distance from `p` to the boundary of the square domain (negative outside).
pub fn boundary_distance(p: Point2) -> f64 {
    (1.0 - p.x.abs()).min(1.0 - p.y.abs())
}

/// Clamps `p` into the admissible box `[-1 + delta, 1 - delta]^2`.
pub fn project_admissible(p: Point2, delta_min: f64) -> Point2 {
    let m = 1.0 - delta_min;
    Point2::new(p.x.clamp(-m, m), p.y.clamp(-m, m))
}

/// A straight fault with a prescribed displacement jump.
///
/// The jump convention: with `n` the left normal of the directed segment
/// `p0 -> p1`, the slip is `u(side n points into) - u(other side)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultSegment {
    pub p0: Point2,
    pub p1: Point2,
    pub slip: SlipField,
}

impl FaultSegment {
    pub fn new(p0: Point2, p1: Point2, slip: SlipField) -> Self {
        FaultSegment { p0, p1, slip }
    }

    pub fn vertices(&self) -> [Point2; 2] {
        [self.p0, self.p1]
    }

    pub fn length(&self) -> f64 {
        self.p0.dist(self.p1)
    }

    /// Unit tangent from `p0` to `p1`.
    pub fn tangent(&self) -> Vec2 {
        (self.p1 - self.p0) * (1.0 / self.length())
    }

    /// Unit left normal; the positive side of the jump.
    pub fn normal(&self) -> Vec2 {
        self.tangent().perp()
    }

    /// Point at arclength fraction `t` in `[0, 1]`.
    pub fn point_at(&self, t: f64) -> Point2 {
        Point2::lerp2(self.p0, 1.0 - t, self.p1, t)
    }

    /// Arclength fraction of the orthogonal projection of `p`.
    pub fn fraction_of(&self, p: Point2) -> f64 {
        let d = self.p1 - self.p0;
        (p - self.p0).dot(d) / d.dot(d)
    }

    /// Slip at arclength fraction `t`.
    pub fn slip_at(&self, t: f64) -> Vec2 {
        self.slip.at_fraction(t)
    }

    /// Arclength derivative of the slip at fraction `t`.
    pub fn slip_tangential_derivative(&self, t: f64) -> Vec2 {
        self.slip.d_at_fraction(t) * (1.0 / self.length())
    }

    /// Checks length and the boundary margin.
    pub fn validate(&self, delta_min: f64) -> Result<()> {
        for p in [self.p0, self.p1] {
            if !p.is_finite() || boundary_distance(p) < delta_min - 1e-12 {
                return Err(Error::FaultOutsideAdmissibleRegion { x: p.x, y: p.y, delta_min });
            }
        }
        let length = self.length();
        if length < 10.0 * f64::EPSILON {
            return Err(Error::DegenerateFault { length });
        }
        Ok(())
    }

    /// Same slip, new endpoints. The slip follows the arclength fraction.
    pub fn with_vertices(&self, p0: Point2, p1: Point2) -> Self {
        FaultSegment { p0, p1, slip: self.slip.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(p0: (f64, f64), p1: (f64, f64)) -> FaultSegment {
        FaultSegment::new(Point2::new(p0.0, p0.1), Point2::new(p1.0, p1.1), SlipField::constant())
    }

    #[test]
    fn degenerate_and_margin() {
        assert!(matches!(seg((0.0, 0.0), (0.0, 0.0)).validate(0.1), Err(Error::DegenerateFault { .. })));
        assert!(matches!(
            seg((-0.99, 0.0), (0.4, 0.0)).validate(0.1),
            Err(Error::FaultOutsideAdmissibleRegion { .. })
        ));
        assert!(seg((-0.4, 0.0), (0.4, 0.0)).validate(0.1).is_ok());
        assert!(seg((-0.9, 0.0), (0.4, 0.0)).validate(0.1).is_ok());
    }

    #[test]
    fn normal_is_left_of_direction() {
        let s = seg((-0.4, 0.0), (0.4, 0.0));
        assert_eq!(s.normal(), Point2::new(0.0, 1.0));
        assert_eq!(s.fraction_of(Point2::new(0.0, 0.3)), 0.5);
    }

    #[test]
    fn segment_distance() {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(1.0, 0.0);
        assert_eq!(point_segment_distance(Point2::new(0.5, 2.0), a, b), 2.0);
        assert_eq!(point_segment_distance(Point2::new(2.0, 0.0), a, b), 1.0);
    }

    #[test]
    fn projection_lands_on_margin() {
        let p = project_admissible(Point2::new(0.97, -1.3), 0.1);
        assert_eq!(p, Point2::new(0.9, -0.9));
    }
}
