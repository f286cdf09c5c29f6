//! Slip (displacement jump) profiles along the fault.
//!
//! Profiles are written in a reference coordinate `s` in `[-0.4, 0.4]`, the
//! arclength coordinate of a fault of length [`REFERENCE_LENGTH`] measured from
//! its midpoint. On a fault of any other length the profile is evaluated at
//! the same arclength fraction.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

/// Length of the fault on which the reference coordinate is arclength.
pub const REFERENCE_LENGTH: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipKind {
    Constant,
    CompactBump,
    CompactBump2,
    Custom,
}

/// Polynomial bump `1 - (s / half_width)^exponent` on `|s| < half_width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub half_width: f64,
    pub exponent: i32,
}

/// `amplitude * profile(s)`, with a flat profile when `bump` is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlipField {
    pub kind: SlipKind,
    pub amplitude: [f64; 2],
    pub bump: Option<Bump>,
}

impl SlipField {
    /// Uniform oblique slip `(-10, 20)`.
    pub fn constant() -> Self {
        SlipField { kind: SlipKind::Constant, amplitude: [-10.0, 20.0], bump: None }
    }

    /// `(-10, 20)` times a degree-12 bump vanishing at `|s| = 0.39`.
    pub fn compact() -> Self {
        SlipField {
            kind: SlipKind::CompactBump,
            amplitude: [-10.0, 20.0],
            bump: Some(Bump { half_width: 0.39, exponent: 12 }),
        }
    }

    /// `(60, -10)` times a degree-10 bump vanishing at `|s| = 0.395`.
    pub fn second() -> Self {
        SlipField {
            kind: SlipKind::CompactBump2,
            amplitude: [60.0, -10.0],
            bump: Some(Bump { half_width: 0.395, exponent: 10 }),
        }
    }

    pub fn custom(amplitude: [f64; 2], bump: Option<Bump>) -> Self {
        SlipField { kind: SlipKind::Custom, amplitude, bump }
    }

    pub fn zero() -> Self {
        SlipField::custom([0.0, 0.0], None)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == [0.0, 0.0]
    }

    /// Same profile, amplitude multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        SlipField {
            kind: SlipKind::Custom,
            amplitude: [c * self.amplitude[0], c * self.amplitude[1]],
            bump: self.bump,
        }
    }

    fn profile(&self, s: f64) -> f64 {
        match self.bump {
            None => 1.0,
            Some(b) if s.abs() < b.half_width => 1.0 - (s / b.half_width).powi(b.exponent),
            Some(_) => 0.0,
        }
    }

    fn d_profile(&self, s: f64) -> f64 {
        match self.bump {
            Some(b) if s.abs() < b.half_width => {
                let p = b.exponent as f64;
                -p * (s / b.half_width).powi(b.exponent - 1) / b.half_width
            }
            _ => 0.0,
        }
    }

    /// Slip at reference coordinate `s`.
    pub fn eval(&self, s: f64) -> Vec2 {
        let f = self.profile(s);
        Vec2::new(self.amplitude[0] * f, self.amplitude[1] * f)
    }

    /// Derivative with respect to the reference coordinate.
    pub fn d_eval(&self, s: f64) -> Vec2 {
        let f = self.d_profile(s);
        Vec2::new(self.amplitude[0] * f, self.amplitude[1] * f)
    }

    /// Slip at arclength fraction `t` in `[0, 1]`.
    pub fn at_fraction(&self, t: f64) -> Vec2 {
        self.eval((t - 0.5) * REFERENCE_LENGTH)
    }

    /// Derivative with respect to the arclength fraction.
    pub fn d_at_fraction(&self, t: f64) -> Vec2 {
        self.d_eval((t - 0.5) * REFERENCE_LENGTH) * REFERENCE_LENGTH
    }

    /// Reference-coordinate points where the profile is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self.bump {
            Some(b) => vec![-b.half_width, b.half_width],
            None => Vec::new(),
        }
    }
}
