//! Symmetric interior penalty DG discretization of plane elasticity with a
//! prescribed displacement jump across the fault.
//!
//! The same bilinear form serves the forward and the adjoint problem: the
//! fault sides carry the usual consistency and penalty terms in both, and
//! only the right-hand side differs (slip data for the forward problem,
//! Neumann data on the acquisition sides for the adjoint). Since `C` is
//! symmetric, `C sym(grad u) : sym(grad v) = C grad u : grad v`, so the
//! adjoint volume term needs no separate assembly.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Side as FaerSide};

use crate::error::{Error, Result};
use crate::geometry::{FaultSegment, Point2, Vec2};
use crate::mesh::{SideClass, SquareEdge, TriMesh};
use crate::quadrature::{gauss_legendre, line_rule, TriangleRule};
use crate::slip::{SlipField, REFERENCE_LENGTH};
use crate::tensors::{ElasticityTensor, Matrix2};

/// Relative residual required from every linear solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Discretization parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DgParams {
    pub degree: usize,
    pub beta: f64,
    /// Mesh size in the penalty `beta |C| r^2 / h`.
    pub h_penalty: f64,
    /// Gauss order on fault sides; defaults to `2r + 1`.
    pub fault_order: Option<usize>,
}

impl DgParams {
    pub fn new(degree: usize, beta: f64, h_penalty: f64) -> Self {
        DgParams { degree, beta, h_penalty, fault_order: None }
    }
}

/// `beta |C(x)| r^2 / h`.
pub fn penalty_eta(c: &ElasticityTensor, x: Point2, beta: f64, r: usize, h: f64) -> f64 {
    penalty_from_norm(c.frobenius(x), beta, r, h)
}

/// Penalty for a given tensor norm `|C|`.
pub fn penalty_from_norm(c_norm: f64, beta: f64, r: usize, h: f64) -> f64 {
    beta * c_norm * (r * r) as f64 / h
}

/// Dimension of the scalar polynomials of total degree `r`.
pub fn poly_dim(r: usize) -> usize {
    (r + 1) * (r + 2) / 2
}

#[derive(Clone, Debug)]
struct ElementBasis {
    center: Point2,
    scale: f64,
    /// `phi_i = sum_k coef[i][k] m_k`, lower triangular.
    coef: Vec<f64>,
}

/// Broken vector polynomial space of degree `r` with an L2-orthonormal basis
/// on each triangle.
#[derive(Clone, Debug)]
pub struct DgSpace {
    pub mesh: TriMesh,
    pub degree: usize,
    pub n_basis: usize,
    elements: Vec<ElementBasis>,
    pub tri_rule: TriangleRule,
    pub side_rule: (Vec<f64>, Vec<f64>),
    pub fault_rule: (Vec<f64>, Vec<f64>),
    exponents: Vec<(i32, i32)>,
}

/// Element-wise coefficients of a field in a [`DgSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct DgField {
    pub coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(space: &DgSpace) -> Self {
        DgField { coeffs: vec![0.0; space.dof_count()] }
    }

    pub fn scaled(&self, c: f64) -> Self {
        DgField { coeffs: self.coeffs.iter().map(|v| c * v).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Basis values and gradients at one point of one element.
#[derive(Clone, Debug, Default)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<Vec2>,
}

impl DgSpace {
    pub fn new(mesh: TriMesh, degree: usize) -> Self {
        Self::with_fault_order(mesh, degree, None)
    }

    pub fn with_fault_order(mesh: TriMesh, degree: usize, fault_order: Option<usize>) -> Self {
        assert!(degree >= 1, "degree must be at least 1");
        let n_basis = poly_dim(degree);
        let mut exponents = Vec::with_capacity(n_basis);
        for d in 0..=degree as i32 {
            for a in (0..=d).rev() {
                exponents.push((a, d - a));
            }
        }
        let tri_rule = TriangleRule::new(2 * degree);
        let mut space = DgSpace {
            elements: Vec::with_capacity(mesh.n_triangles()),
            mesh,
            degree,
            n_basis,
            tri_rule,
            side_rule: line_rule(2 * degree + 1),
            fault_rule: line_rule(fault_order.unwrap_or(2 * degree + 1).max(2 * degree + 1)),
            exponents,
        };
        for t in 0..space.mesh.n_triangles() {
            let basis = space.orthonormalize(t);
            space.elements.push(basis);
        }
        space
    }

    pub fn dof_count(&self) -> usize {
        2 * self.n_basis * self.mesh.n_triangles()
    }

    /// Local dofs per element (both components).
    pub fn local_dofs(&self) -> usize {
        2 * self.n_basis
    }

    /// Global index of basis `i` of component `c` on element `e`.
    pub fn dof(&self, e: usize, c: usize, i: usize) -> usize {
        e * 2 * self.n_basis + c * self.n_basis + i
    }

    fn monomials(&self, center: Point2, scale: f64, x: Point2, m: &mut [f64], dm: &mut [Vec2]) {
        let xi = (x.x - center.x) / scale;
        let eta = (x.y - center.y) / scale;
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            let pa = if a > 0 { xi.powi(a) } else { 1.0 };
            let pb = if b > 0 { eta.powi(b) } else { 1.0 };
            m[k] = pa * pb;
            let dx = if a > 0 { a as f64 * xi.powi(a - 1) * pb } else { 0.0 };
            let dy = if b > 0 { b as f64 * pa * eta.powi(b - 1) } else { 0.0 };
            dm[k] = Vec2::new(dx / scale, dy / scale);
        }
    }

    fn orthonormalize(&self, t: usize) -> ElementBasis {
        let nb = self.n_basis;
        let p = self.mesh.triangle_points(t);
        let center = Point2::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0);
        let scale = (0..3).map(|k| p[k].dist(p[(k + 1) % 3])).fold(0.0, f64::max);
        let mut mass = vec![0.0; nb * nb];
        let mut m = vec![0.0; nb];
        let mut dm = vec![Vec2::ZERO; nb];
        for (x, w) in self.element_points(t) {
            self.monomials(center, scale, x, &mut m, &mut dm);
            for i in 0..nb {
                for j in 0..nb {
                    mass[i * nb + j] += w * m[i] * m[j];
                }
            }
        }
        // Cholesky mass = L L^T, then coef = L^{-1}
        let mut l = vec![0.0; nb * nb];
        for j in 0..nb {
            let mut d = mass[j * nb + j];
            for k in 0..j {
                d -= l[j * nb + k] * l[j * nb + k];
            }
            let d = d.sqrt();
            l[j * nb + j] = d;
            for i in j + 1..nb {
                let mut s = mass[i * nb + j];
                for k in 0..j {
                    s -= l[i * nb + k] * l[j * nb + k];
                }
                l[i * nb + j] = s / d;
            }
        }
        let mut coef = vec![0.0; nb * nb];
        for col in 0..nb {
            for i in col..nb {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in col..i {
                    s -= l[i * nb + k] * coef[k * nb + col];
                }
                coef[i * nb + col] = s / l[i * nb + i];
            }
        }
        ElementBasis { center, scale, coef }
    }

    /// Physical quadrature points and weights of element `t`.
    pub fn element_points(&self, t: usize) -> impl Iterator<Item = (Point2, f64)> + '_ {
        let p = self.mesh.triangle_points(t);
        let jac = 2.0 * self.mesh.area(t);
        self.tri_rule.points.iter().zip(&self.tri_rule.weights).map(move |(q, w)| {
            (p[0] + (p[1] - p[0]) * q[0] + (p[2] - p[0]) * q[1], w * jac)
        })
    }

    /// Quadrature on side `s`: `(parameter from the first vertex, point, weight)`.
    pub fn side_points(&self, s: usize) -> Vec<(f64, Point2, f64)> {
        let side = &self.mesh.sides[s];
        let (a, b) = (self.mesh.vertices[side.vertices[0]], self.mesh.vertices[side.vertices[1]]);
        let len = a.dist(b);
        let rule = if side.class == SideClass::Fault { &self.fault_rule } else { &self.side_rule };
        rule.0.iter().zip(&rule.1).map(|(&t, &w)| (t, Point2::lerp2(a, 1.0 - t, b, t), w * len)).collect()
    }

    /// Quadrature on fault side `s` for integrands carrying the slip
    /// profile: the side is split at the kinks of `slip` and each piece gets
    /// enough Gauss points to integrate the polynomial profile times a basis
    /// function exactly. Returns `(point, weight)`.
    pub fn slip_points(&self, s: usize, fault: &FaultSegment, slip: &SlipField) -> Vec<(Point2, f64)> {
        let side = &self.mesh.sides[s];
        let (a, b) = (self.mesh.vertices[side.vertices[0]], self.mesh.vertices[side.vertices[1]]);
        let (ta, tb) = (fault.fraction_of(a), fault.fraction_of(b));
        let mut cuts = vec![0.0, 1.0];
        for k in slip.kinks() {
            let t = k / REFERENCE_LENGTH + 0.5;
            let f = (t - ta) / (tb - ta);
            if f > 1e-12 && f < 1.0 - 1e-12 {
                cuts.push(f);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let n = match slip.bump {
            Some(bump) => (bump.exponent.max(0) as usize + self.degree) / 2 + 1,
            None => 0,
        }
        .max(self.fault_rule.0.len());
        let (gx, gw) = gauss_legendre(n);
        let len = a.dist(b);
        let mut out = Vec::with_capacity(n * (cuts.len() - 1));
        for piece in cuts.windows(2) {
            let (f0, f1) = (piece[0], piece[1]);
            for (&x, &w) in gx.iter().zip(&gw) {
                let t = f0 + (f1 - f0) * x;
                out.push((Point2::lerp2(a, 1.0 - t, b, t), w * (f1 - f0) * len));
            }
        }
        out
    }

    /// Basis values and gradients of element `e` at `x`.
    pub fn eval_basis(&self, e: usize, x: Point2, out: &mut BasisEval) {
        let nb = self.n_basis;
        let el = &self.elements[e];
        let mut m = vec![0.0; nb];
        let mut dm = vec![Vec2::ZERO; nb];
        self.monomials(el.center, el.scale, x, &mut m, &mut dm);
        out.values.clear();
        out.grads.clear();
        for i in 0..nb {
            let mut v = 0.0;
            let mut g = Vec2::ZERO;
            for k in 0..=i {
                let c = el.coef[i * nb + k];
                v += c * m[k];
                g += dm[k] * c;
            }
            out.values.push(v);
            out.grads.push(g);
        }
    }

    /// `u(x)` on element `e`.
    pub fn value(&self, u: &DgField, e: usize, x: Point2) -> Vec2 {
        let mut b = BasisEval::default();
        self.eval_basis(e, x, &mut b);
        self.value_with(u, e, &b)
    }

    fn value_with(&self, u: &DgField, e: usize, b: &BasisEval) -> Vec2 {
        let nb = self.n_basis;
        let base = self.dof(e, 0, 0);
        let mut v = Vec2::ZERO;
        for i in 0..nb {
            v.x += u.coeffs[base + i] * b.values[i];
            v.y += u.coeffs[base + nb + i] * b.values[i];
        }
        v
    }

    /// `grad u(x)` on element `e`, entry `(i, j) = d u_i / d x_j`.
    pub fn gradient(&self, u: &DgField, e: usize, x: Point2) -> Matrix2 {
        let mut b = BasisEval::default();
        self.eval_basis(e, x, &mut b);
        self.gradient_with(u, e, &b)
    }

    fn gradient_with(&self, u: &DgField, e: usize, b: &BasisEval) -> Matrix2 {
        let nb = self.n_basis;
        let base = self.dof(e, 0, 0);
        let mut g = Matrix2::ZERO;
        for i in 0..nb {
            let (c0, c1) = (u.coeffs[base + i], u.coeffs[base + nb + i]);
            g.a11 += c0 * b.grads[i].x;
            g.a12 += c0 * b.grads[i].y;
            g.a21 += c1 * b.grads[i].x;
            g.a22 += c1 * b.grads[i].y;
        }
        g
    }

    /// Average and jump of `u` on side `s` at `x`.
    ///
    /// Interior and fault sides: `{u} = (u+ + u-)/2` and
    /// `[[u]] = u+ ⊙ n+ + u- ⊙ n-`. Boundary sides are one-sided.
    pub fn side_traces(&self, u: &DgField, s: usize, x: Point2) -> (Vec2, Matrix2) {
        let side = &self.mesh.sides[s];
        let up = self.value(u, side.plus.triangle, x);
        let jp = Matrix2::sym_outer(up, side.plus.normal);
        match side.minus {
            None => (up, jp),
            Some(m) => {
                let um = self.value(u, m.triangle, x);
                ((up + um) * 0.5, jp + Matrix2::sym_outer(um, m.normal))
            }
        }
    }

    /// Projects `f` onto the space (exact for polynomials of degree `r`).
    pub fn interpolate(&self, f: impl Fn(Point2) -> Vec2) -> DgField {
        let mut u = DgField::zeros(self);
        let mut b = BasisEval::default();
        for e in 0..self.mesh.n_triangles() {
            for (x, w) in self.element_points(e).collect::<Vec<_>>() {
                self.eval_basis(e, x, &mut b);
                let v = f(x);
                for i in 0..self.n_basis {
                    u.coeffs[self.dof(e, 0, i)] += w * v.x * b.values[i];
                    u.coeffs[self.dof(e, 1, i)] += w * v.y * b.values[i];
                }
            }
        }
        u
    }
}

/// Block-sparse symmetric matrix with one dense block per pair of
/// neighbouring elements, stored in compressed-column form.
#[derive(Clone, Debug)]
pub struct BlockMatrix {
    pub n: usize,
    ld: usize,
    neighbors: Vec<Vec<usize>>,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl BlockMatrix {
    fn new(space: &DgSpace) -> Self {
        let mesh = &space.mesh;
        let ld = space.local_dofs();
        let mut neighbors: Vec<Vec<usize>> = (0..mesh.n_triangles()).map(|e| vec![e]).collect();
        for side in &mesh.sides {
            if let Some(m) = side.minus {
                neighbors[side.plus.triangle].push(m.triangle);
                neighbors[m.triangle].push(side.plus.triangle);
            }
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }
        let n = space.dof_count();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for nb in &neighbors {
            for _ in 0..ld {
                for &f in nb {
                    row_idx.extend(f * ld..(f + 1) * ld);
                }
                col_ptr.push(row_idx.len());
            }
        }
        let values = vec![0.0; row_idx.len()];
        BlockMatrix { n, ld, neighbors, col_ptr, row_idx, values }
    }

    /// Adds the dense `ld x ld` row-major block coupling rows of element
    /// `re` to columns of element `ce`.
    fn add_block(&mut self, re: usize, ce: usize, block: &[f64]) {
        let ld = self.ld;
        let pos = self.neighbors[ce].iter().position(|&f| f == re).expect("block outside the pattern");
        for b in 0..ld {
            let base = self.col_ptr[ce * ld + b] + pos * ld;
            for a in 0..ld {
                self.values[base + a] += block[a * ld + b];
            }
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
        y
    }

    /// Entry `(i, j)`; zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[range.clone()].binary_search(&i) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Dense copy, for small test problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                d[self.row_idx[k]][j] = self.values[k];
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Assembled system: symmetric matrix and right-hand side.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: BlockMatrix,
    pub rhs: Vec<f64>,
}

/// Per-point data of one side's quadrature.
struct SideEval {
    /// (triangle, outward normal, basis) for plus and, if present, minus.
    parts: Vec<(usize, Vec2, BasisEval)>,
}

fn strain(c: usize, g: Vec2) -> Matrix2 {
    if c == 0 {
        Matrix2::new(g.x, g.y, 0.0, 0.0)
    } else {
        Matrix2::new(0.0, 0.0, g.x, g.y)
    }
}

fn unit(c: usize, v: f64) -> Vec2 {
    if c == 0 {
        Vec2::new(v, 0.0)
    } else {
        Vec2::new(0.0, v)
    }
}

/// Jump `J_a` and averaged stress `S_a` of every local test function on a
/// side, in the order plus-then-minus, component-major.
fn side_tests(space: &DgSpace, c: &ElasticityTensor, x: Point2, ev: &SideEval) -> (Vec<Matrix2>, Vec<Matrix2>) {
    let avg = if ev.parts.len() == 2 { 0.5 } else { 1.0 };
    let mut jumps = Vec::with_capacity(ev.parts.len() * space.local_dofs());
    let mut stress = Vec::with_capacity(jumps.capacity());
    for (_, n, b) in &ev.parts {
        for comp in 0..2 {
            for i in 0..space.n_basis {
                jumps.push(Matrix2::sym_outer(unit(comp, b.values[i]), *n));
                stress.push(c.apply(x, &strain(comp, b.grads[i])) * avg);
            }
        }
    }
    (jumps, stress)
}

fn side_eval(space: &DgSpace, s: usize, x: Point2) -> SideEval {
    let side = &space.mesh.sides[s];
    let mut parts = Vec::with_capacity(2);
    let mut b = BasisEval::default();
    space.eval_basis(side.plus.triangle, x, &mut b);
    parts.push((side.plus.triangle, side.plus.normal, b));
    if let Some(m) = side.minus {
        let mut b = BasisEval::default();
        space.eval_basis(m.triangle, x, &mut b);
        parts.push((m.triangle, m.normal, b));
    }
    SideEval { parts }
}

/// Assembles the SIPG matrix.
pub fn assemble_matrix(space: &DgSpace, c: &ElasticityTensor, p: &DgParams) -> BlockMatrix {
    assemble_matrix_masked(space, c, p, None)
}

/// Assembles only the volume terms of elements in `mask` and the side terms
/// of sides touching them: every block in a row or column of a masked
/// element is complete, the rest of the pattern holds partial sums.
pub fn assemble_matrix_masked(space: &DgSpace, c: &ElasticityTensor, p: &DgParams, mask: Option<&[bool]>) -> BlockMatrix {
    let mesh = &space.mesh;
    let active = |e: usize| mask.is_none_or(|m| m[e]);
    let ld = space.local_dofs();
    let nb = space.n_basis;
    let mut a = BlockMatrix::new(space);
    let mut b = BasisEval::default();
    let mut block = vec![0.0; ld * ld];
    let mut strains = vec![Matrix2::ZERO; ld];
    let mut stresses = vec![Matrix2::ZERO; ld];

    for e in (0..mesh.n_triangles()).filter(|&e| active(e)) {
        block.iter_mut().for_each(|v| *v = 0.0);
        for (x, w) in space.element_points(e) {
            space.eval_basis(e, x, &mut b);
            for comp in 0..2 {
                for i in 0..nb {
                    let g = strain(comp, b.grads[i]);
                    strains[comp * nb + i] = g;
                    stresses[comp * nb + i] = c.apply(x, &g);
                }
            }
            for r in 0..ld {
                for s in r..ld {
                    let v = w * stresses[s].ddot(&strains[r]);
                    block[r * ld + s] += v;
                    if s != r {
                        block[s * ld + r] += v;
                    }
                }
            }
        }
        a.add_block(e, e, &block);
    }

    for (s, side) in mesh.sides.iter().enumerate() {
        if side.class == SideClass::Neumann || !(active(side.plus.triangle) || side.minus.is_some_and(|m| active(m.triangle))) {
            continue;
        }
        let np = if side.minus.is_some() { 2 } else { 1 };
        let nl = np * ld;
        let mut local = vec![0.0; nl * nl];
        for (_, x, w) in space.side_points(s) {
            let ev = side_eval(space, s, x);
            let (jumps, stress) = side_tests(space, c, x, &ev);
            let eta = penalty_eta(c, x, p.beta, p.degree, p.h_penalty);
            for r in 0..nl {
                for q in 0..nl {
                    let consistency = stress[q].ddot(&jumps[r]) + stress[r].ddot(&jumps[q]);
                    local[r * nl + q] += w * (eta * jumps[r].ddot(&jumps[q]) - consistency);
                }
            }
        }
        let tris: Vec<usize> = [Some(side.plus.triangle), side.minus.map(|m| m.triangle)].into_iter().flatten().collect();
        for (pi, &te) in tris.iter().enumerate() {
            for (qi, &tf) in tris.iter().enumerate() {
                let mut blk = vec![0.0; ld * ld];
                for r in 0..ld {
                    for q in 0..ld {
                        blk[r * ld + q] = local[(pi * ld + r) * nl + qi * ld + q];
                    }
                }
                a.add_block(te, tf, &blk);
            }
        }
    }
    a
}

/// Slip right-hand side `-sum_S int (g ⊙ n+) : {C grad v} + sum_S int eta (g ⊙ n+) : [[v]]`.
pub fn assemble_slip_rhs(space: &DgSpace, c: &ElasticityTensor, p: &DgParams, fault: &FaultSegment, slip: &SlipField) -> Vec<f64> {
    let mut rhs = vec![0.0; space.dof_count()];
    if slip.is_zero() {
        return rhs;
    }
    let ld = space.local_dofs();
    for (s, side) in space.mesh.sides.iter().enumerate() {
        if side.class != SideClass::Fault {
            continue;
        }
        let np = side.plus.normal;
        for (x, w) in space.slip_points(s, fault, slip) {
            let g = slip.at_fraction(fault.fraction_of(x));
            let gn = Matrix2::sym_outer(g, np);
            let ev = side_eval(space, s, x);
            let (jumps, stress) = side_tests(space, c, x, &ev);
            let eta = penalty_eta(c, x, p.beta, p.degree, p.h_penalty);
            for (k, (t, _, _)) in ev.parts.iter().enumerate() {
                for r in 0..ld {
                    let a = k * ld + r;
                    rhs[t * ld + r] += w * (eta * gn.ddot(&jumps[a]) - gn.ddot(&stress[a]));
                }
            }
        }
    }
    rhs
}

/// Forward system: SIPG matrix and slip load.
pub fn assemble_forward(space: &DgSpace, c: &ElasticityTensor, p: &DgParams, fault: &FaultSegment) -> SparseSystem {
    SparseSystem { matrix: assemble_matrix(space, c, p), rhs: assemble_slip_rhs(space, c, p, fault, &fault.slip) }
}

/// Sampling points of the one-sided trace on selected boundary sides.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceLayout {
    pub sides: Vec<usize>,
    /// `(side index into sides, local parameter, point, weight)`.
    pub points: Vec<(usize, f64, Point2, f64)>,
}

impl TraceLayout {
    /// All boundary sides lying on one of `edges`, in side order.
    pub fn new(space: &DgSpace, edges: &[SquareEdge]) -> Self {
        let mut sides = Vec::new();
        let mut points = Vec::new();
        for (s, side) in space.mesh.sides.iter().enumerate() {
            if side.edge.is_some_and(|e| edges.contains(&e)) {
                for (t, x, w) in space.side_points(s) {
                    points.push((sides.len(), t, x, w));
                }
                sides.push(s);
            }
        }
        TraceLayout { sides, points }
    }

    pub fn total_length(&self) -> f64 {
        self.points.iter().map(|p| p.3).sum()
    }
}

/// One-sided trace of `u` at every layout point.
pub fn boundary_trace(space: &DgSpace, u: &DgField, layout: &TraceLayout) -> Vec<Vec2> {
    layout
        .points
        .iter()
        .map(|&(k, _, x, _)| space.value(u, space.mesh.sides[layout.sides[k]].plus.triangle, x))
        .collect()
}

/// Neumann load `int f . v` with `f` given at the layout points.
pub fn assemble_boundary_load(space: &DgSpace, layout: &TraceLayout, f: &[Vec2]) -> Vec<f64> {
    assert_eq!(f.len(), layout.points.len());
    let mut rhs = vec![0.0; space.dof_count()];
    let mut b = BasisEval::default();
    for (&(k, _, x, w), fv) in layout.points.iter().zip(f) {
        let e = space.mesh.sides[layout.sides[k]].plus.triangle;
        space.eval_basis(e, x, &mut b);
        for i in 0..space.n_basis {
            rhs[space.dof(e, 0, i)] += w * fv.x * b.values[i];
            rhs[space.dof(e, 1, i)] += w * fv.y * b.values[i];
        }
    }
    rhs
}

/// Sparse Cholesky factorization of an assembled matrix.
pub struct Factorization {
    matrix: BlockMatrix,
    llt: Llt<usize, f64>,
}

/// Reuses the symbolic analysis while the sparsity pattern is unchanged.
#[derive(Default)]
pub struct SolverCache {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLlt<usize>)>,
}

impl SolverCache {
    pub fn factorize(&mut self, matrix: BlockMatrix) -> Result<Factorization> {
        let symbolic = SymbolicSparseColMat::new_checked(matrix.n, matrix.n, matrix.col_ptr.clone(), None, matrix.row_idx.clone());
        let a = SparseColMat::new(symbolic, matrix.values.clone());
        let reuse = matches!(&self.symbolic, Some((cp, ri, _)) if *cp == matrix.col_ptr && *ri == matrix.row_idx);
        if !reuse {
            let sym = SymbolicLlt::try_new(a.symbolic(), FaerSide::Lower)
                .map_err(|e| Error::SingularSystem(format!("symbolic factorization failed: {e:?}")))?;
            self.symbolic = Some((matrix.col_ptr.clone(), matrix.row_idx.clone(), sym));
        }
        let sym = self.symbolic.as_ref().expect("set above").2.clone();
        let llt = Llt::try_new_with_symbolic(sym, a.as_ref(), FaerSide::Lower)
            .map_err(|e| Error::SingularSystem(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Factorization { matrix, llt })
    }
}

impl Factorization {
    pub fn new(matrix: BlockMatrix) -> Result<Self> {
        SolverCache::default().factorize(matrix)
    }

    pub fn matrix(&self) -> &BlockMatrix {
        &self.matrix
    }

    /// Solves `A x = b` to the relative residual [`RESIDUAL_TOL`], with
    /// iterative refinement if needed.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.n;
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        for _ in 0..4 {
            let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
            self.llt.solve_in_place(rhs.as_mut());
            for i in 0..n {
                x[i] += rhs[(i, 0)];
            }
            let ax = self.matrix.mul_vec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !rnorm.is_finite() {
                return Err(Error::SingularSystem("non-finite residual".into()));
            }
            if rnorm <= RESIDUAL_TOL * bnorm {
                return Ok(x);
            }
        }
        Err(Error::NonConvergence(format!("residual above {RESIDUAL_TOL:e} after refinement")))
    }

    pub fn solve_field(&self, b: &[f64]) -> Result<DgField> {
        Ok(DgField { coeffs: self.solve(b)? })
    }
}

/// Assembles and solves the forward problem.
pub fn solve_forward(space: &DgSpace, c: &ElasticityTensor, p: &DgParams, fault: &FaultSegment) -> Result<DgField> {
    let sys = assemble_forward(space, c, p, fault);
    Factorization::new(sys.matrix)?.solve_field(&sys.rhs)
}

/// Solves the adjoint problem with Neumann data `residual` at the layout
/// points; no slip data on the fault.
pub fn solve_adjoint(
    space: &DgSpace,
    c: &ElasticityTensor,
    p: &DgParams,
    layout: &TraceLayout,
    residual: &[Vec2],
) -> Result<DgField> {
    let rhs = assemble_boundary_load(space, layout, residual);
    Factorization::new(assemble_matrix(space, c, p))?.solve_field(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{FaultMesh, MeshParams, SideClass};

    fn space(h: f64, degree: usize) -> (FaultMesh, DgSpace) {
        let fault = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::constant());
        let params = MeshParams { h_target: h, h_coarse: h.max(0.1), ..Default::default() };
        let mesh = FaultMesh::build(&fault, &params).unwrap();
        let space = DgSpace::new(mesh.fine.clone(), degree);
        (mesh, space)
    }

    #[test]
    fn penalty_for_unit_lame_parameters() {
        let c = ElasticityTensor::unit();
        let eta = penalty_eta(&c, Point2::ZERO, 10.0, 2, 0.1);
        assert!((eta - 10.0 * 24f64.sqrt() * 4.0 / 0.1).abs() < 1e-12);
    }

    #[test]
    fn matrix_is_symmetric() {
        for r in [1, 2] {
            let (mesh, space) = space(0.2, r);
            let a = assemble_matrix(&space, &ElasticityTensor::unit(), &DgParams::new(r, 10.0, mesh.nominal_h()));
            assert!(a.asymmetry() <= 1e-14 * a.max_abs(), "r = {r}");
        }
    }

    #[test]
    fn full_mask_matches_full_assembly() {
        let (mesh, space) = space(0.2, 1);
        let c = ElasticityTensor::unit();
        let p = DgParams::new(1, 10.0, mesh.nominal_h());
        let full = assemble_matrix(&space, &c, &p);
        let mask = vec![true; space.mesh.n_triangles()];
        let masked = assemble_matrix_masked(&space, &c, &p, Some(&mask));
        assert_eq!(full.values, masked.values);
    }

    #[test]
    fn zero_slip_gives_zero_solution() {
        let (mesh, space) = space(0.2, 1);
        let c = ElasticityTensor::unit();
        let p = DgParams::new(1, 10.0, mesh.nominal_h());
        let rhs = assemble_slip_rhs(&space, &c, &p, &mesh.fault, &SlipField::zero());
        assert!(rhs.iter().all(|&v| v == 0.0));
        let u = Factorization::new(assemble_matrix(&space, &c, &p)).unwrap().solve_field(&rhs).unwrap();
        assert!(u.max_abs() <= 1e-9);
    }

    #[test]
    fn interpolation_and_traces_are_exact_for_polynomials() {
        for r in [1, 2] {
            let (_, space) = space(0.2, r);
            let f = move |x: Point2| {
                let q = if r == 2 { x.x * x.y } else { 0.0 };
                Vec2::new(1.0 + 2.0 * x.x - x.y + q, -0.5 + x.y + 3.0 * q)
            };
            let u = space.interpolate(f);
            let layout = TraceLayout::new(&space, &[SquareEdge::Left, SquareEdge::Top, SquareEdge::Right]);
            assert!((layout.total_length() - 6.0).abs() < 1e-12);
            for (v, p) in boundary_trace(&space, &u, &layout).iter().zip(&layout.points) {
                assert!((*v - f(p.2)).norm() < 1e-11, "r = {r}");
            }
            let s = space.mesh.sides.iter().position(|s| s.minus.is_some()).unwrap();
            let x = space.side_points(s)[0].1;
            let (avg, jump) = space.side_traces(&u, s, x);
            assert!((avg - f(x)).norm() < 1e-11);
            assert!(jump.norm() < 1e-11);
        }
    }

    #[test]
    fn rigid_motion_only_loads_clamped_elements() {
        let (mesh, space) = space(0.2, 1);
        let a = assemble_matrix(&space, &ElasticityTensor::unit(), &DgParams::new(1, 10.0, mesh.nominal_h()));
        let u = space.interpolate(|x| Vec2::new(0.3 - x.y, 0.2 + x.x));
        let au = a.mul_vec(&u.coeffs);
        let mut clamped = vec![false; space.mesh.n_triangles()];
        for side in space.mesh.sides.iter().filter(|s| s.class == SideClass::Dirichlet) {
            clamped[side.plus.triangle] = true;
        }
        let scale = a.max_abs();
        for e in (0..space.mesh.n_triangles()).filter(|&e| !clamped[e]) {
            for c in 0..2 {
                for i in 0..space.n_basis {
                    assert!(au[space.dof(e, c, i)].abs() < 1e-12 * scale);
                }
            }
        }
        assert!(clamped.iter().enumerate().any(|(e, &cl)| cl && au[space.dof(e, 0, 0)].abs() > 1e-8));
    }
}
