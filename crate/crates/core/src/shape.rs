//! Misfit functional and shape derivatives with respect to the fault.
//!
//! For a deformation `U` of the domain that moves the fault and an
//! infinitesimal slip change `h`, the derivative of the misfit is evaluated
//! from the forward solution `u` and the adjoint solution `w` as
//!
//! ```text
//! dJ = - int ( B grad u : grad w - C[grad u DU] : grad w
//!              - C grad u : (grad w DU) + div U  C grad u : grad w )
//!      + int_S (C grad w) n . h
//! ```
//!
//! with `n` the fault normal. The volume integral is the derivative of the
//! bilinear form under the domain map `x + tau U`; [`ShapeFormula::Discrete`]
//! also differentiates the interface and slip-load terms of the interior
//! penalty form, which gives the exact derivative of the discrete misfit.

use serde::{Deserialize, Serialize};

use crate::dg::{penalty_eta, DgField, DgSpace, TraceLayout};
use crate::error::{Error, Result};
use crate::geometry::{FaultSegment, Point2, Vec2};
use crate::mesh::{FaultMesh, HatField, SideClass, TriMesh};
use crate::problem::Discretization;
use crate::slip::SlipField;
use crate::synthetic::Measurement;
use crate::tensors::{ElasticityTensor, Matrix2};

/// Sign of the `B` term relative to the other volume terms.
pub const B_TERM_SIGN: f64 = 1.0;

/// Which terms of the shape derivative are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFormula {
    /// Volume integral plus the averaged-traction slip term.
    Continuous,
    /// Volume integral plus the derivatives of the interface and slip-load
    /// terms of the discrete form.
    #[default]
    Discrete,
}

/// `1/2 sum w |u_m - u|^2` over matching samples.
pub fn misfit_samples(u: &[Vec2], um: &[Vec2], weights: &[f64]) -> Result<f64> {
    if u.len() != um.len() || u.len() != weights.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} trace samples, {} data samples, {} weights",
            u.len(),
            um.len(),
            weights.len()
        )));
    }
    Ok(0.5 * u.iter().zip(um).zip(weights).map(|((a, b), w)| w * (*a - *b).dot(*a - *b)).sum::<f64>())
}

/// Misfit of the trace `u_trace` (sampled on `layout`) against `m`.
pub fn misfit(layout: &TraceLayout, u_trace: &[Vec2], m: &Measurement) -> Result<f64> {
    let um = m.sample(layout)?;
    let w: Vec<f64> = layout.points.iter().map(|p| p.3).collect();
    misfit_samples(u_trace, &um, &w)
}

/// Residual `u - u_m` at the layout points; the Neumann datum of the adjoint.
pub fn residual(layout: &TraceLayout, u_trace: &[Vec2], m: &Measurement) -> Result<Vec<Vec2>> {
    let um = m.sample(layout)?;
    if um.len() != u_trace.len() {
        return Err(Error::LayoutMismatch("trace and layout differ".into()));
    }
    Ok(u_trace.iter().zip(&um).map(|(a, b)| *a - *b).collect())
}

/// A deformation direction `U` with its Jacobian `DU` (`DU_ij = dU_i/dx_j`).
///
/// Fields that reach the fault must be affine along it, so that the fault
/// stays straight and slip is carried along with the arclength fraction.
/// Fields must vanish on the outer boundary.
pub enum DeformationField {
    /// Piecewise linear with the given values at the mesh vertices.
    Nodal(Vec<Vec2>),
    /// Closed form `x -> (U(x), DU(x))`.
    Analytic(Box<dyn Fn(Point2) -> (Vec2, Matrix2) + Sync>),
}

impl DeformationField {
    pub fn zero(mesh: &TriMesh) -> Self {
        DeformationField::Nodal(vec![Vec2::ZERO; mesh.vertices.len()])
    }

    /// `U = phi * dir` for a hat function `phi`.
    pub fn from_hat(hat: &HatField, dir: Vec2) -> Self {
        Self::from_weights(&hat.values, dir)
    }

    /// `U = weights * dir` for scalar nodal weights.
    pub fn from_weights(weights: &[f64], dir: Vec2) -> Self {
        DeformationField::Nodal(weights.iter().map(|&v| dir * v).collect())
    }

    /// Field of fault vertex `l` of `mesh` along `dir`.
    pub fn fault_vertex(mesh: &FaultMesh, l: usize, dir: Vec2) -> Self {
        Self::from_weights(&mesh.vertex_field(l), dir)
    }

    /// `(U(x), DU)` on triangle `e`.
    pub fn eval(&self, mesh: &TriMesh, e: usize, x: Point2) -> (Vec2, Matrix2) {
        Direction::eval(self, mesh, e, x)
    }
}

/// Evaluation interface shared by owned and borrowed deformation fields.
trait Direction {
    fn eval(&self, mesh: &TriMesh, e: usize, x: Point2) -> (Vec2, Matrix2);
    /// Whether the field may be nonzero on triangle `e`.
    fn touches(&self, mesh: &TriMesh, e: usize) -> bool;
}

impl Direction for DeformationField {
    fn eval(&self, mesh: &TriMesh, e: usize, x: Point2) -> (Vec2, Matrix2) {
        match self {
            DeformationField::Analytic(f) => f(x),
            DeformationField::Nodal(vals) => p1_eval(mesh, e, x, |k| vals[k]),
        }
    }

    fn touches(&self, mesh: &TriMesh, e: usize) -> bool {
        match self {
            DeformationField::Nodal(v) => mesh.triangles[e].iter().any(|&k| v[k] != Vec2::ZERO),
            DeformationField::Analytic(_) => true,
        }
    }
}

/// Borrowed scalar weights times a direction.
struct NodalView<'a> {
    weights: &'a [f64],
    dir: Vec2,
}

impl Direction for NodalView<'_> {
    fn eval(&self, mesh: &TriMesh, e: usize, x: Point2) -> (Vec2, Matrix2) {
        p1_eval(mesh, e, x, |k| self.dir * self.weights[k])
    }

    fn touches(&self, mesh: &TriMesh, e: usize) -> bool {
        mesh.triangles[e].iter().any(|&k| self.weights[k] != 0.0)
    }
}

/// Value and Jacobian on triangle `e` of the P1 field with vertex values `f`.
fn p1_eval(mesh: &TriMesh, e: usize, x: Point2, f: impl Fn(usize) -> Vec2) -> (Vec2, Matrix2) {
    let tri = mesh.triangles[e];
    let p = mesh.triangle_points(e);
    let area2 = (p[1] - p[0]).cross(p[2] - p[0]);
    let mut u = Vec2::ZERO;
    let mut du = Matrix2::ZERO;
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        let lam = (b - a).cross(x - a) / area2;
        let grad = (b - a).perp() * (1.0 / area2);
        let v = f(tri[k]);
        u += v * lam;
        du += Matrix2::outer(v, grad);
    }
    (u, du)
}

/// Derivative of `C grad u : grad w` times the volume element.
fn volume_integrand(c: &ElasticityTensor, x: Point2, u: Vec2, du: &Matrix2, gu: &Matrix2, gw: &Matrix2) -> f64 {
    let cgu = c.apply(x, gu);
    B_TERM_SIGN * c.tensor_b(u, gu).ddot(gw) - c.apply(x, &gu.matmul(du)).ddot(gw) - cgu.ddot(&gw.matmul(du))
        + du.trace() * cgu.ddot(gw)
}

/// Traces of one field on one side at one point, per adjacent triangle.
struct Trace {
    value: Vec2,
    grad: Matrix2,
}

/// One adjacent triangle of a side: index, outward normal, traces of `u`
/// and `w`.
struct Part {
    triangle: usize,
    normal: Vec2,
    u: Trace,
    w: Trace,
}

fn side_parts(space: &DgSpace, u: &DgField, w: &DgField, s: usize, x: Point2) -> Vec<Part> {
    let side = &space.mesh.sides[s];
    std::iter::once(side.plus)
        .chain(side.minus)
        .map(|adj| Part {
            triangle: adj.triangle,
            normal: adj.normal,
            u: Trace { value: space.value(u, adj.triangle, x), grad: space.gradient(u, adj.triangle, x) },
            w: Trace { value: space.value(w, adj.triangle, x), grad: space.gradient(w, adj.triangle, x) },
        })
        .collect()
}

/// Side geometry under the map: unit tangent, stretch rate `t . d_t U`, and
/// normal rate factor `d_t U` (the normal moves by `-(n . d_t U) t`).
fn side_rates(mesh: &TriMesh, s: usize, dir: &dyn Direction, e: usize) -> (Vec2, f64, Vec2) {
    let side = &mesh.sides[s];
    let (a, b) = (mesh.vertices[side.vertices[0]], mesh.vertices[side.vertices[1]]);
    let len = a.dist(b);
    let t = (b - a) * (1.0 / len);
    let dtu = (dir.eval(mesh, e, b).0 - dir.eval(mesh, e, a).0) * (1.0 / len);
    (t, t.dot(dtu), dtu)
}

/// Shared state of a derivative evaluation on one discretization.
struct Engine<'a> {
    disc: &'a Discretization,
    u: &'a DgField,
    w: &'a DgField,
    /// Slip that produced `u`.
    slip: &'a SlipField,
}

impl Engine<'_> {
    fn c(&self) -> &ElasticityTensor {
        &self.disc.model.elasticity
    }

    fn eta(&self, x: Point2) -> f64 {
        let p = &self.disc.params;
        penalty_eta(self.c(), x, p.beta, p.degree, p.h_penalty)
    }

    fn eta_rate(&self, x: Point2, uv: Vec2) -> f64 {
        if self.c().is_constant() {
            return 0.0;
        }
        self.eta(x) * self.c().frobenius_derivative(x, uv) / self.c().frobenius(x)
    }

    /// Derivative of the bilinear form `a(u, w)` along each direction;
    /// volume terms only unless `faces`.
    fn form_rate(&self, dirs: &[&dyn Direction], faces: bool) -> Vec<f64> {
        let space = &self.disc.space;
        let mesh = &space.mesh;
        let c = self.c();
        let mut out = vec![0.0; dirs.len()];
        for e in 0..mesh.n_triangles() {
            if !dirs.iter().any(|d| d.touches(mesh, e)) {
                continue;
            }
            for (x, wq) in space.element_points(e) {
                let gu = space.gradient(self.u, e, x);
                let gw = space.gradient(self.w, e, x);
                for (o, d) in out.iter_mut().zip(dirs) {
                    let (uv, du) = d.eval(mesh, e, x);
                    *o += wq * volume_integrand(c, x, uv, &du, &gu, &gw);
                }
            }
        }
        if !faces {
            return out;
        }
        for (s, side) in mesh.sides.iter().enumerate() {
            if side.class == SideClass::Neumann {
                continue;
            }
            let tris: Vec<usize> = std::iter::once(side.plus.triangle).chain(side.minus.map(|m| m.triangle)).collect();
            let active: Vec<usize> = (0..dirs.len()).filter(|&k| tris.iter().any(|&e| dirs[k].touches(mesh, e))).collect();
            if active.is_empty() {
                continue;
            }
            let avg = if tris.len() == 2 { 0.5 } else { 1.0 };
            for (_, x, wq) in space.side_points(s) {
                let parts = side_parts(space, self.u, self.w, s, x);
                let eta = self.eta(x);
                let ju: Matrix2 = parts.iter().fold(Matrix2::ZERO, |m, p| m + Matrix2::sym_outer(p.u.value, p.normal));
                let jw: Matrix2 = parts.iter().fold(Matrix2::ZERO, |m, p| m + Matrix2::sym_outer(p.w.value, p.normal));
                let su = parts.iter().fold(Matrix2::ZERO, |m, p| m + c.apply(x, &p.u.grad)) * avg;
                let sw = parts.iter().fold(Matrix2::ZERO, |m, p| m + c.apply(x, &p.w.grad)) * avg;
                let integrand = eta * ju.ddot(&jw) - su.ddot(&jw) - sw.ddot(&ju);
                for &k in &active {
                    let d = dirs[k];
                    let (t, stretch, dtu) = side_rates(mesh, s, d, tris[0]);
                    let uv = d.eval(mesh, tris[0], x).0;
                    let mut ju_r = Matrix2::ZERO;
                    let mut jw_r = Matrix2::ZERO;
                    let mut su_r = Matrix2::ZERO;
                    let mut sw_r = Matrix2::ZERO;
                    for p in &parts {
                        let dn = t * -p.normal.dot(dtu);
                        ju_r += Matrix2::sym_outer(p.u.value, dn);
                        jw_r += Matrix2::sym_outer(p.w.value, dn);
                        let du = d.eval(mesh, p.triangle, x).1;
                        su_r += c.apply(x, &(p.u.grad.matmul(&du) * -1.0)) + c.tensor_b(uv, &p.u.grad) * B_TERM_SIGN;
                        sw_r += c.apply(x, &(p.w.grad.matmul(&du) * -1.0)) + c.tensor_b(uv, &p.w.grad) * B_TERM_SIGN;
                    }
                    let rate = self.eta_rate(x, uv) * ju.ddot(&jw) + eta * (ju_r.ddot(&jw) + ju.ddot(&jw_r))
                        - (su_r * avg).ddot(&jw)
                        - su.ddot(&jw_r)
                        - (sw_r * avg).ddot(&ju)
                        - sw.ddot(&ju_r);
                    out[k] += wq * (stretch * integrand + rate);
                }
            }
        }
        out
    }

    /// Derivative of the slip load `l(w)` along each direction.
    fn load_rate(&self, dirs: &[&dyn Direction]) -> Vec<f64> {
        let space = &self.disc.space;
        let mesh = &space.mesh;
        let fault = self.disc.fault();
        let slip = self.slip;
        let c = self.c();
        let mut out = vec![0.0; dirs.len()];
        if slip.is_zero() {
            return out;
        }
        for (s, side) in mesh.sides.iter().enumerate() {
            if side.class != SideClass::Fault {
                continue;
            }
            let tris = [side.plus.triangle, side.minus.expect("fault side").triangle];
            let active: Vec<usize> = (0..dirs.len()).filter(|&k| tris.iter().any(|&e| dirs[k].touches(mesh, e))).collect();
            if active.is_empty() {
                continue;
            }
            for (x, wq) in space.slip_points(s, fault, slip) {
                let parts = side_parts(space, self.u, self.w, s, x);
                let g = slip.at_fraction(fault.fraction_of(x));
                let np = side.plus.normal;
                let gn = Matrix2::sym_outer(g, np);
                let eta = self.eta(x);
                let jw: Matrix2 = parts.iter().fold(Matrix2::ZERO, |m, p| m + Matrix2::sym_outer(p.w.value, p.normal));
                let sw = parts.iter().fold(Matrix2::ZERO, |m, p| m + c.apply(x, &p.w.grad)) * 0.5;
                let integrand = eta * gn.ddot(&jw) - gn.ddot(&sw);
                for &k in &active {
                    let d = dirs[k];
                    let (t, stretch, dtu) = side_rates(mesh, s, d, tris[0]);
                    let uv = d.eval(mesh, tris[0], x).0;
                    let gn_r = Matrix2::sym_outer(g, t * -np.dot(dtu));
                    let mut jw_r = Matrix2::ZERO;
                    let mut sw_r = Matrix2::ZERO;
                    for p in &parts {
                        jw_r += Matrix2::sym_outer(p.w.value, t * -p.normal.dot(dtu));
                        let du = d.eval(mesh, p.triangle, x).1;
                        sw_r += c.apply(x, &(p.w.grad.matmul(&du) * -1.0)) + c.tensor_b(uv, &p.w.grad) * B_TERM_SIGN;
                    }
                    let rate = self.eta_rate(x, uv) * gn.ddot(&jw) + eta * (gn_r.ddot(&jw) + gn.ddot(&jw_r))
                        - gn_r.ddot(&sw)
                        - gn.ddot(&(sw_r * 0.5));
                    out[k] += wq * (stretch * integrand + rate);
                }
            }
        }
        out
    }

    fn derivatives(&self, dirs: &[&dyn Direction], formula: ShapeFormula) -> Vec<f64> {
        match formula {
            ShapeFormula::Continuous => self.form_rate(dirs, false).into_iter().map(|v| -v).collect(),
            ShapeFormula::Discrete => {
                let a = self.form_rate(dirs, true);
                let l = self.load_rate(dirs);
                a.iter().zip(&l).map(|(a, l)| l - a).collect()
            }
        }
    }

    /// Derivative with respect to the slip along `h`.
    fn slip_rate(&self, h: &SlipField, formula: ShapeFormula) -> f64 {
        let space = &self.disc.space;
        let fault = self.disc.fault();
        let c = self.c();
        let mut total = 0.0;
        for (s, side) in space.mesh.sides.iter().enumerate() {
            if side.class != SideClass::Fault {
                continue;
            }
            for (x, wq) in space.slip_points(s, fault, h) {
                let parts = side_parts(space, self.u, self.w, s, x);
                let hn = Matrix2::sym_outer(h.at_fraction(fault.fraction_of(x)), side.plus.normal);
                let sw = parts.iter().fold(Matrix2::ZERO, |m, p| m + c.apply(x, &p.w.grad)) * 0.5;
                let mut v = -hn.ddot(&sw);
                if formula == ShapeFormula::Discrete {
                    let jw = parts.iter().fold(Matrix2::ZERO, |m, p| m + Matrix2::sym_outer(p.w.value, p.normal));
                    v += self.eta(x) * hn.ddot(&jw);
                }
                total += wq * v;
            }
        }
        total
    }
}

/// `int_S {C grad w} n . h` with `n` the fault normal and `h` a slip
/// perturbation: the derivative of the misfit with respect to the slip.
pub fn slip_term(disc: &Discretization, u: &DgField, w: &DgField, h: &SlipField, formula: ShapeFormula) -> f64 {
    Engine { disc, u, w, slip: h }.slip_rate(h, formula)
}

/// Distributed shape derivative of the misfit in direction `(U, h)`.
pub fn distributed_shape_derivative(
    disc: &Discretization,
    u: &DgField,
    w: &DgField,
    slip: &SlipField,
    field: &DeformationField,
    h: Option<&SlipField>,
    formula: ShapeFormula,
) -> f64 {
    let engine = Engine { disc, u, w, slip };
    let d = engine.derivatives(&[field], formula)[0];
    d + h.map_or(0.0, |h| engine.slip_rate(h, formula))
}

/// Boundary form of the shape derivative for constant `C`:
///
/// ```text
/// int_S  U_n (C grad w)_t . d_t g - U_t (C grad w)_n . d_t g + (C grad w)_n . h
/// ```
///
/// with `t` the fault tangent, `n` its normal, `(C grad w)_t = {C grad w} t`
/// and `d_t` the arclength derivative.
pub fn boundary_shape_derivative(
    disc: &Discretization,
    w: &DgField,
    slip: &SlipField,
    field: &DeformationField,
    h: Option<&SlipField>,
) -> Result<f64> {
    let c = &disc.model.elasticity;
    if !c.is_constant() {
        return Err(Error::VariableCoefficients);
    }
    let space = &disc.space;
    let fault = disc.fault();
    let (t, n) = (fault.tangent(), fault.normal());
    let mut total = 0.0;
    for (s, side) in space.mesh.sides.iter().enumerate() {
        if side.class != SideClass::Fault {
            continue;
        }
        let e = side.plus.triangle;
        let minus = side.minus.expect("fault side").triangle;
        for (x, wq) in space.slip_points(s, fault, slip) {
            let sigma = (c.apply(x, &space.gradient(w, e, x)) + c.apply(x, &space.gradient(w, minus, x))) * 0.5;
            let dg = slip.d_at_fraction(fault.fraction_of(x)) * (1.0 / fault.length());
            let uv = Direction::eval(field, &space.mesh, e, x).0;
            total += wq * (uv.dot(n) * sigma.mul_vec(t).dot(dg) - uv.dot(t) * sigma.mul_vec(n).dot(dg));
        }
        if let Some(h) = h {
            for (x, wq) in space.slip_points(s, fault, h) {
                let sigma = (c.apply(x, &space.gradient(w, e, x)) + c.apply(x, &space.gradient(w, minus, x))) * 0.5;
                total += wq * sigma.mul_vec(n).dot(h.at_fraction(fault.fraction_of(x)));
            }
        }
    }
    Ok(total)
}

/// Directional derivatives along the four vertex directions and the descent
/// vectors `theta_l = -(dJ/dP_l)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapeGradient {
    /// `derivative[l][k]`: vertex `l`, coordinate direction `k`.
    pub derivative: [[f64; 2]; 2],
    pub theta: [[f64; 2]; 2],
}

impl ShapeGradient {
    pub fn from_derivatives(derivative: [[f64; 2]; 2]) -> Self {
        let theta = derivative.map(|d| d.map(|v| -v));
        ShapeGradient { derivative, theta }
    }

    /// Largest component magnitude.
    pub fn max_abs(&self) -> f64 {
        self.derivative.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &ShapeGradient) -> ShapeGradient {
        let mut d = self.derivative;
        for l in 0..2 {
            for k in 0..2 {
                d[l][k] += other.derivative[l][k];
            }
        }
        ShapeGradient::from_derivatives(d)
    }
}

/// Shape derivative along the deformation fields of both fault vertices in
/// both coordinate directions.
pub fn vertex_gradient(disc: &Discretization, u: &DgField, w: &DgField, slip: &SlipField, formula: ShapeFormula) -> ShapeGradient {
    let fields = [disc.mesh.vertex_field(0), disc.mesh.vertex_field(1)];
    let views: Vec<NodalView> = (0..4)
        .map(|i| NodalView {
            weights: &fields[i / 2],
            dir: if i % 2 == 0 { Vec2::new(1.0, 0.0) } else { Vec2::new(0.0, 1.0) },
        })
        .collect();
    let dirs: Vec<&dyn Direction> = views.iter().map(|v| v as &dyn Direction).collect();
    let d = Engine { disc, u, w, slip }.derivatives(&dirs, formula);
    ShapeGradient::from_derivatives([[d[0], d[1]], [d[2], d[3]]])
}

/// Shape derivatives along several deformation fields at once.
pub fn shape_derivatives(
    disc: &Discretization,
    u: &DgField,
    w: &DgField,
    slip: &SlipField,
    fields: &[DeformationField],
    formula: ShapeFormula,
) -> Vec<f64> {
    let dirs: Vec<&dyn Direction> = fields.iter().map(|f| f as &dyn Direction).collect();
    Engine { disc, u, w, slip }.derivatives(&dirs, formula)
}

/// Fault of `fault` with vertex `l` moved by `d`.
pub fn move_vertex(fault: &FaultSegment, l: usize, d: Vec2) -> FaultSegment {
    if l == 0 {
        fault.with_vertices(fault.p0 + d, fault.p1)
    } else {
        fault.with_vertices(fault.p0, fault.p1 + d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::central_difference;
    use crate::problem::{DirectSolver, Model};
    use crate::synthetic::{make_measurement, Acquisition};

    struct Setup {
        model: Model,
        solver: DirectSolver,
        m: Measurement,
        u: DgField,
        w: DgField,
    }

    fn setup(slip: SlipField) -> Setup {
        let model = Model::new(0.1);
        let truth = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), slip);
        let m = make_measurement(&model.with_h(0.05), &truth, Acquisition::AllExposed).unwrap();
        let guess = truth.with_vertices(Point2::new(-0.35, 0.1), Point2::new(0.43, 0.12));
        let solver = model.solver(model.build_mesh(&guess).unwrap()).unwrap();
        let layout = solver.disc.layout(m.acquisition.edges());
        let u = solver.forward(&m.slip).unwrap();
        let r = residual(&layout, &solver.disc.trace(&u, &layout), &m).unwrap();
        let w = solver.adjoint(&layout, &r).unwrap();
        Setup { model, solver, m, u, w }
    }

    #[test]
    fn misfit_of_constant_difference() {
        let u = vec![Vec2::new(1.0, 2.0); 4];
        let um = vec![Vec2::new(0.0, 0.0); 4];
        let w = vec![0.5, 0.25, 0.25, 1.0];
        assert!((misfit_samples(&u, &um, &w).unwrap() - 0.5 * 2.0 * 5.0).abs() < 1e-14);
        assert!(matches!(misfit_samples(&u, &um[..3], &w), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn zero_direction_gives_zero() {
        let s = setup(SlipField::constant());
        let disc = &s.solver.disc;
        let zero = DeformationField::zero(&disc.space.mesh);
        for f in [ShapeFormula::Continuous, ShapeFormula::Discrete] {
            assert_eq!(distributed_shape_derivative(disc, &s.u, &s.w, &s.m.slip, &zero, None, f), 0.0);
        }
    }

    #[test]
    fn derivative_is_linear_in_the_direction() {
        let s = setup(SlipField::compact());
        let disc = &s.solver.disc;
        let ex = DeformationField::fault_vertex(&disc.mesh, 0, Vec2::new(1.0, 0.0));
        let ey = DeformationField::fault_vertex(&disc.mesh, 0, Vec2::new(0.0, 1.0));
        let mix = DeformationField::fault_vertex(&disc.mesh, 0, Vec2::new(2.0, -3.0));
        let d = shape_derivatives(disc, &s.u, &s.w, &s.m.slip, &[ex, ey, mix], ShapeFormula::Discrete);
        assert!((d[2] - (2.0 * d[0] - 3.0 * d[1])).abs() < 1e-10 * d[2].abs().max(1.0));
    }

    #[test]
    fn descent_vector_negates_derivative() {
        let s = setup(SlipField::constant());
        let g = vertex_gradient(&s.solver.disc, &s.u, &s.w, &s.m.slip, ShapeFormula::Discrete);
        for l in 0..2 {
            for k in 0..2 {
                assert_eq!(g.theta[l][k], -g.derivative[l][k]);
            }
        }
    }

    #[test]
    fn discrete_gradient_matches_moved_mesh_differences() {
        for slip in [SlipField::constant(), SlipField::compact()] {
            let s = setup(slip);
            let disc = &s.solver.disc;
            let g = vertex_gradient(disc, &s.u, &s.w, &s.m.slip, ShapeFormula::Discrete);
            let ms = std::slice::from_ref(&s.m);
            for l in 0..2 {
                for k in 0..2 {
                    let dir = if k == 0 { Vec2::new(1.0, 0.0) } else { Vec2::new(0.0, 1.0) };
                    let fd = central_difference(&s.model, &disc.mesh, ms, l, dir, 1e-4).unwrap();
                    let a = g.derivative[l][k];
                    assert!((a - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "vertex {l} dir {k}: {a} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn discrete_gradient_matches_differences_for_variable_coefficients() {
        let mut model = Model::new(0.1);
        model.elasticity = ElasticityTensor::affine(
            crate::tensors::AffineField { value: 1.0, gradient: [0.3, -0.2] },
            crate::tensors::AffineField { value: 1.2, gradient: [0.0, 0.25] },
        )
        .unwrap();
        let truth = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::compact());
        let m = make_measurement(&model.with_h(0.05), &truth, Acquisition::AllExposed).unwrap();
        let guess = truth.with_vertices(Point2::new(-0.35, 0.1), Point2::new(0.43, 0.12));
        let solver = model.solver(model.build_mesh(&guess).unwrap()).unwrap();
        let layout = solver.disc.layout(m.acquisition.edges());
        let u = solver.forward(&m.slip).unwrap();
        let w = solver.adjoint(&layout, &residual(&layout, &solver.disc.trace(&u, &layout), &m).unwrap()).unwrap();
        let g = vertex_gradient(&solver.disc, &u, &w, &m.slip, ShapeFormula::Discrete);
        for l in 0..2 {
            for k in 0..2 {
                let dir = if k == 0 { Vec2::new(1.0, 0.0) } else { Vec2::new(0.0, 1.0) };
                let fd = central_difference(&model, &solver.disc.mesh, std::slice::from_ref(&m), l, dir, 1e-4).unwrap();
                let a = g.derivative[l][k];
                assert!((a - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "vertex {l} dir {k}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn slip_term_matches_amplitude_differences() {
        let s = setup(SlipField::compact());
        let h = SlipField::custom([1.0, -0.5], Some(crate::slip::Bump { half_width: 0.3, exponent: 4 }));
        let analytic = slip_term(&s.solver.disc, &s.u, &s.w, &h, ShapeFormula::Discrete);
        let tau = 1e-4;
        let disc = &s.solver.disc;
        let layout = disc.layout(s.m.acquisition.edges());
        let j = |c: f64| {
            // the slip load is linear in the slip
            let b: Vec<f64> = disc.slip_rhs(&s.m.slip).iter().zip(disc.slip_rhs(&h.scaled(c))).map(|(a, b)| a + b).collect();
            let u = s.solver.factor.solve_field(&b).unwrap();
            misfit(&layout, &disc.trace(&u, &layout), &s.m).unwrap()
        };
        let fd = (j(tau) - j(-tau)) / (2.0 * tau);
        assert!((analytic - fd).abs() <= 1e-6 * fd.abs(), "{analytic} vs {fd}");
    }

    #[test]
    fn boundary_formula_needs_constant_coefficients() {
        let mut s = setup(SlipField::compact());
        let field = DeformationField::fault_vertex(&s.solver.disc.mesh, 0, Vec2::new(1.0, 0.0));
        assert!(boundary_shape_derivative(&s.solver.disc, &s.w, &s.m.slip, &field, None).is_ok());
        s.solver.disc.model.elasticity = ElasticityTensor::affine(
            crate::tensors::AffineField { value: 1.0, gradient: [0.1, 0.0] },
            crate::tensors::AffineField::constant(1.0),
        )
        .unwrap();
        assert_eq!(
            boundary_shape_derivative(&s.solver.disc, &s.w, &s.m.slip, &field, None),
            Err(Error::VariableCoefficients)
        );
    }

    #[test]
    fn vertex_gradient_sums_over_measurements() {
        let s = setup(SlipField::constant());
        let disc = &s.solver.disc;
        let g = vertex_gradient(disc, &s.u, &s.w, &s.m.slip, ShapeFormula::Discrete);
        let w2 = s.w.scaled(2.0);
        let g2 = vertex_gradient(disc, &s.u, &w2, &s.m.slip, ShapeFormula::Discrete);
        let sum = g.add(&g);
        for l in 0..2 {
            for k in 0..2 {
                assert!((g2.derivative[l][k] - sum.derivative[l][k]).abs() < 1e-10 * sum.max_abs());
            }
        }
    }
}
