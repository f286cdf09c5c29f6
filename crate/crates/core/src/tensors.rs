//! 2x2 matrices and the isotropic elasticity tensor with its derived
//! tensors: the directional derivative `B` and the polarization tensor `M`.

use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Vec2};

/// A real 2x2 matrix, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Matrix2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Matrix2 {
    pub const ZERO: Matrix2 = Matrix2 { a11: 0.0, a12: 0.0, a21: 0.0, a22: 0.0 };
    pub const IDENTITY: Matrix2 = Matrix2 { a11: 1.0, a12: 0.0, a21: 0.0, a22: 1.0 };

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Matrix2 { a11, a12, a21, a22 }
    }

    pub fn from_rows(r: [[f64; 2]; 2]) -> Self {
        Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.a11,
            (0, 1) => self.a12,
            (1, 0) => self.a21,
            _ => self.a22,
        }
    }

    /// `a b^T`.
    pub fn outer(a: Vec2, b: Vec2) -> Self {
        Matrix2::new(a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y)
    }

    /// `a ⊙ n = (a n^T + n a^T) / 2`.
    pub fn sym_outer(a: Vec2, n: Vec2) -> Self {
        let off = 0.5 * (a.x * n.y + a.y * n.x);
        Matrix2::new(a.x * n.x, off, off, a.y * n.y)
    }

    pub fn transpose(&self) -> Self {
        Matrix2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn sym(&self) -> Self {
        let off = 0.5 * (self.a12 + self.a21);
        Matrix2::new(self.a11, off, off, self.a22)
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// Frobenius product `A : B`.
    pub fn ddot(&self, b: &Matrix2) -> f64 {
        self.a11 * b.a11 + self.a12 * b.a12 + self.a21 * b.a21 + self.a22 * b.a22
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a11 * v.x + self.a12 * v.y, self.a21 * v.x + self.a22 * v.y)
    }

    pub fn matmul(&self, b: &Matrix2) -> Matrix2 {
        Matrix2::new(
            self.a11 * b.a11 + self.a12 * b.a21,
            self.a11 * b.a12 + self.a12 * b.a22,
            self.a21 * b.a11 + self.a22 * b.a21,
            self.a21 * b.a12 + self.a22 * b.a22,
        )
    }

    pub fn scale(&self, s: f64) -> Matrix2 {
        Matrix2::new(s * self.a11, s * self.a12, s * self.a21, s * self.a22)
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22].iter().all(|v| v.is_finite())
    }
}

impl Add for Matrix2 {
    type Output = Matrix2;
    fn add(self, b: Matrix2) -> Matrix2 {
        Matrix2::new(self.a11 + b.a11, self.a12 + b.a12, self.a21 + b.a21, self.a22 + b.a22)
    }
}

impl AddAssign for Matrix2 {
    fn add_assign(&mut self, b: Matrix2) {
        *self = *self + b;
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;
    fn sub(self, b: Matrix2) -> Matrix2 {
        Matrix2::new(self.a11 - b.a11, self.a12 - b.a12, self.a21 - b.a21, self.a22 - b.a22)
    }
}

impl Mul<f64> for Matrix2 {
    type Output = Matrix2;
    fn mul(self, s: f64) -> Matrix2 {
        self.scale(s)
    }
}

/// An affine scalar field `value + gradient . x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    pub value: f64,
    pub gradient: [f64; 2],
}

impl AffineField {
    pub fn constant(value: f64) -> Self {
        AffineField { value, gradient: [0.0, 0.0] }
    }

    pub fn at(&self, x: Point2) -> f64 {
        self.value + self.gradient[0] * x.x + self.gradient[1] * x.y
    }

    pub fn grad(&self) -> Vec2 {
        Vec2::from(self.gradient)
    }

    pub fn is_constant(&self) -> bool {
        self.gradient == [0.0, 0.0]
    }

    /// Minimum over the square `[-1, 1]^2`.
    pub fn min_on_domain(&self) -> f64 {
        self.value - self.gradient[0].abs() - self.gradient[1].abs()
    }
}

/// Isotropic stiffness `C[A] = 2 mu sym(A) + lambda tr(A) I` with affine
/// Lamé fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityTensor {
    pub lambda: AffineField,
    pub mu: AffineField,
}

impl ElasticityTensor {
    /// Constant Lamé parameters.
    pub fn constant(lambda: f64, mu: f64) -> Result<Self> {
        Self::affine(AffineField::constant(lambda), AffineField::constant(mu))
    }

    /// Affine Lamé fields; they must satisfy `mu > 0` and `lambda >= 0` on the
    /// whole domain so that `C E : E >= 2 min(mu) |E|^2`.
    pub fn affine(lambda: AffineField, mu: AffineField) -> Result<Self> {
        let ok = [lambda.value, mu.value]
            .iter()
            .chain(lambda.gradient.iter())
            .chain(mu.gradient.iter())
            .all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidElasticity("non-finite Lamé parameter".into()));
        }
        if mu.min_on_domain() <= 0.0 {
            return Err(Error::InvalidElasticity(format!(
                "mu must be positive on the domain (min {})",
                mu.min_on_domain()
            )));
        }
        if lambda.min_on_domain() < 0.0 {
            return Err(Error::InvalidElasticity(format!(
                "lambda must be nonnegative on the domain (min {})",
                lambda.min_on_domain()
            )));
        }
        Ok(ElasticityTensor { lambda, mu })
    }

    /// `lambda = mu = 1`.
    pub fn unit() -> Self {
        Self::constant(1.0, 1.0).expect("valid")
    }

    pub fn is_constant(&self) -> bool {
        self.lambda.is_constant() && self.mu.is_constant()
    }

    /// Bound on the spatial derivatives of the Lamé fields.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lambda.grad().norm().max(self.mu.grad().norm())
    }

    /// Strong convexity constant `2 inf mu`.
    pub fn convexity_constant(&self) -> f64 {
        2.0 * self.mu.min_on_domain()
    }

    /// `C(x)[A]`.
    pub fn apply(&self, x: Point2, a: &Matrix2) -> Matrix2 {
        apply_lame(self.lambda.at(x), self.mu.at(x), a)
    }

    /// Component `C_{ijhk}(x)`.
    pub fn component(&self, x: Point2, i: usize, j: usize, h: usize, k: usize) -> f64 {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        self.lambda.at(x) * d(i, j) * d(h, k) + self.mu.at(x) * (d(i, h) * d(j, k) + d(i, k) * d(j, h))
    }

    /// Frobenius norm `sqrt(sum C_{ijhk}^2)` used by the penalty.
    pub fn frobenius(&self, x: Point2) -> f64 {
        let l = self.lambda.at(x);
        let m = self.mu.at(x);
        (2.0 * (l + 2.0 * m).powi(2) + 2.0 * l * l + 4.0 * m * m).sqrt()
    }

    /// Derivative of [`Self::frobenius`] at `x` along `u`.
    pub fn frobenius_derivative(&self, x: Point2, u: Vec2) -> f64 {
        let (l, m) = (self.lambda.at(x), self.mu.at(x));
        let (dl, dm) = (u.dot(self.lambda.grad()), u.dot(self.mu.grad()));
        (2.0 * (l + 2.0 * m) * (dl + 2.0 * dm) + 2.0 * l * dl + 4.0 * m * dm) / self.frobenius(x)
    }

    /// `B[A]` at `x` for the direction `u`: the derivative of `C` along `u`.
    pub fn tensor_b(&self, u: Vec2, a: &Matrix2) -> Matrix2 {
        apply_lame(u.dot(self.lambda.grad()), u.dot(self.mu.grad()), a)
    }

    /// `M[A] = B[A] - C[A (DU^T + DU)] + div(U) C[A]` at `x`.
    pub fn polarization_apply(&self, x: Point2, u: Vec2, du: &Matrix2, a: &Matrix2) -> Matrix2 {
        let s = du.transpose() + *du;
        self.tensor_b(u, a) - self.apply(x, &a.matmul(&s)) + self.apply(x, a) * du.trace()
    }
}

/// `2 mu sym(A) + lambda tr(A) I`.
pub fn apply_lame(lambda: f64, mu: f64, a: &Matrix2) -> Matrix2 {
    let tr = lambda * a.trace();
    let off = mu * (a.a12 + a.a21);
    Matrix2::new(2.0 * mu * a.a11 + tr, off, off, 2.0 * mu * a.a22 + tr)
}
