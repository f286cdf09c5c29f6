//! Misfit and vertex gradient as functions of the fault endpoints, summed
//! over measurements.
//!
//! [`DirectObjective`] refactorizes the full system at every evaluation.
//! [`CondensedObjective`] keeps a factorization of the part of the system
//! that does not move with the fault and condenses the solve onto the moving
//! elements, which is exact and much cheaper while the mesh topology holds.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt as SparseLlt, SymbolicLlt};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::linalg::solvers::Llt as DenseLlt;
use faer::{Mat, Side as FaerSide};

use crate::dg::{assemble_matrix_masked, DgField, SolverCache};
use crate::error::{Error, Result};
use crate::geometry::FaultSegment;
use crate::mesh::FaultMesh;
use crate::problem::{Discretization, Model};
use crate::shape::{misfit, residual, vertex_gradient, ShapeFormula, ShapeGradient};
use crate::synthetic::Measurement;

/// Misfit and gradient at one fault position.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Sum over measurements.
    pub misfit: f64,
    pub misfits: Vec<f64>,
    pub gradient: ShapeGradient,
}

/// Evaluates the misfit functional and its vertex gradient.
pub trait Objective {
    /// Misfit and gradient with the fault at `fault`.
    fn evaluate(&mut self, fault: &FaultSegment) -> Result<Evaluation>;
    /// Mesh of the last evaluation.
    fn mesh(&self) -> Option<&FaultMesh>;
    /// Number of times a mesh was generated from scratch.
    fn remeshes(&self) -> usize;
}

/// Moves `mesh` to `fault` keeping its topology, or rebuilds it when the
/// moved mesh would be too distorted. Returns the mesh and whether it was
/// rebuilt.
pub fn follow(model: &Model, mesh: Option<&FaultMesh>, fault: &FaultSegment) -> Result<(FaultMesh, bool)> {
    fault.validate(model.mesh.delta_min)?;
    if let Some(m) = mesh {
        match m.moved(fault.p0 - m.fault.p0, fault.p1 - m.fault.p1) {
            Ok(mut moved) => {
                moved.fault = fault.clone();
                return Ok((moved, false));
            }
            Err(Error::MeshQuality { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((model.build_mesh(fault)?, true))
}

/// Per-measurement misfit and gradient from a forward and adjoint solve.
fn accumulate(
    disc: &Discretization,
    measurements: &[Measurement],
    formula: ShapeFormula,
    mut solve_forward: impl FnMut(&Measurement) -> Result<DgField>,
    mut solve_adjoint: impl FnMut(&Measurement, Vec<f64>) -> Result<DgField>,
) -> Result<Evaluation> {
    let mut misfits = Vec::with_capacity(measurements.len());
    let mut gradient = ShapeGradient::default();
    for m in measurements {
        let layout = disc.layout(m.acquisition.edges());
        let u = solve_forward(m)?;
        let trace = disc.trace(&u, &layout);
        misfits.push(misfit(&layout, &trace, m)?);
        let r = residual(&layout, &trace, m)?;
        let w = solve_adjoint(m, disc.adjoint_rhs(&layout, &r))?;
        gradient = gradient.add(&vertex_gradient(disc, &u, &w, &m.slip, formula));
    }
    Ok(Evaluation { misfit: misfits.iter().sum(), misfits, gradient })
}

/// Full assembly and factorization at every evaluation.
pub struct DirectObjective {
    pub model: Model,
    pub measurements: Vec<Measurement>,
    pub formula: ShapeFormula,
    mesh: Option<FaultMesh>,
    cache: SolverCache,
    remeshes: usize,
}

impl DirectObjective {
    pub fn new(model: Model, measurements: Vec<Measurement>, formula: ShapeFormula) -> Self {
        DirectObjective { model, measurements, formula, mesh: None, cache: SolverCache::default(), remeshes: 0 }
    }
}

impl Objective for DirectObjective {
    fn evaluate(&mut self, fault: &FaultSegment) -> Result<Evaluation> {
        let (mesh, rebuilt) = follow(&self.model, self.mesh.as_ref(), fault)?;
        self.remeshes += rebuilt as usize;
        let solver = self.model.solver_cached(mesh, &mut self.cache)?;
        let eval = accumulate(
            &solver.disc,
            &self.measurements,
            self.formula,
            |m| solver.forward(&m.slip),
            |_, b| solver.factor.solve_field(&b),
        )?;
        self.mesh = Some(solver.disc.mesh);
        Ok(eval)
    }

    fn mesh(&self) -> Option<&FaultMesh> {
        self.mesh.as_ref()
    }

    fn remeshes(&self) -> usize {
        self.remeshes
    }
}

/// Static condensation onto the elements that move with the fault.
///
/// With `M` the degrees of freedom of elements that have a moving vertex and
/// `N` the rest, the block `A_NN` does not depend on the fault position. Only
/// the elements `B` of `N` that share a side with `M` couple to `M`, so with
/// `G = (A_NN^-1)_BB` the system reduces to the dense Schur complement
/// `S = A_MM - A_MB G A_BM`. The solution is recovered on `M`, on `B`, and on
/// the acquisition elements, which is all the misfit and the gradient read.
pub struct CondensedObjective {
    pub model: Model,
    pub measurements: Vec<Measurement>,
    pub formula: ShapeFormula,
    reference: Option<Reference>,
    /// Cholesky factor of the Schur complement at a recent position.
    factor: Option<DenseLlt<f64>>,
    mesh: Option<FaultMesh>,
    remeshes: usize,
}

/// Conjugate gradient iterations above which the Schur complement is
/// refactorized for the next evaluation.
const REFACTOR_ITERATIONS: usize = 6;
const MAX_CG_ITERATIONS: usize = 40;
const CG_TOL: f64 = 1e-13;

/// The condensed operator at the current position, solved by conjugate
/// gradients preconditioned with a factorization from a nearby position.
struct Condensed<'a> {
    amm: &'a Mat<f64>,
    abm: &'a Mat<f64>,
    g: &'a Mat<f64>,
    factor: &'a mut Option<DenseLlt<f64>>,
    stale: bool,
}

impl Condensed<'_> {
    fn apply(&self, v: &Mat<f64>) -> Mat<f64> {
        self.amm * v - self.abm.transpose() * (self.g * (self.abm * v))
    }

    fn refactor(&mut self) -> Result<()> {
        let gabm = self.g * self.abm;
        let s = self.amm - self.abm.transpose() * &gabm;
        let n = s.nrows();
        let s = Mat::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
        let llt = s
            .llt(FaerSide::Lower)
            .map_err(|e| Error::SingularSystem(format!("condensed system is not positive definite: {e:?}")))?;
        *self.factor = Some(llt);
        self.stale = false;
        Ok(())
    }

    fn solve(&mut self, b: &Mat<f64>) -> Result<Mat<f64>> {
        if self.factor.is_none() {
            self.refactor()?;
        }
        if let Some(x) = self.pcg(b) {
            return Ok(x);
        }
        self.refactor()?;
        self.pcg(b).ok_or_else(|| Error::NonConvergence("condensed solve did not converge".into()))
    }

    fn pcg(&mut self, b: &Mat<f64>) -> Option<Mat<f64>> {
        let dot = |a: &Mat<f64>, c: &Mat<f64>| (0..a.nrows()).map(|i| a[(i, 0)] * c[(i, 0)]).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        let mut x = Mat::<f64>::zeros(b.nrows(), 1);
        if bnorm == 0.0 {
            return Some(x);
        }
        let factor = self.factor.as_ref().expect("factorized before the iteration");
        let mut r = b.clone();
        let mut z = r.clone();
        factor.solve_in_place(z.as_mut());
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for k in 1..=MAX_CG_ITERATIONS {
            let ap = self.apply(&p);
            let step = rz / dot(&p, &ap);
            x += &p * faer::Scale(step);
            r -= &ap * faer::Scale(step);
            if dot(&r, &r).sqrt() <= CG_TOL * bnorm {
                if k > REFACTOR_ITERATIONS {
                    self.stale = true;
                }
                return Some(x);
            }
            z.copy_from(&r);
            factor.solve_in_place(z.as_mut());
            let rz_next = dot(&r, &z);
            p = &z + &p * faer::Scale(rz_next / rz);
            rz = rz_next;
        }
        None
    }
}

/// Factorization data of one mesh topology.
struct Reference {
    mesh: FaultMesh,
    mask: Vec<bool>,
    m_dofs: Vec<usize>,
    b_dofs: Vec<usize>,
    /// Dofs of acquisition elements outside `M`.
    x_dofs: Vec<usize>,
    /// Position of a dof in `m_dofs`, `b_dofs`, `x_dofs`.
    m_slot: Vec<usize>,
    b_slot: Vec<usize>,
    x_slot: Vec<usize>,
    /// `(A_NN^-1)_BB`.
    g: Mat<f64>,
    /// `(A_NN^-1)_XB`.
    xb: Mat<f64>,
}

const NONE: usize = usize::MAX;

impl Reference {
    fn new(model: &Model, mesh: FaultMesh, measurements: &[Measurement]) -> Result<Self> {
        let disc = model.discretize(mesh);
        let space = &disc.space;
        let tmesh = &space.mesh;
        let ne = tmesh.n_triangles();
        let ld = space.local_dofs();
        let fields = [disc.mesh.vertex_field(0), disc.mesh.vertex_field(1)];
        let mask: Vec<bool> =
            tmesh.triangles.iter().map(|t| t.iter().any(|&v| fields[0][v] != 0.0 || fields[1][v] != 0.0)).collect();
        let mut in_b = vec![false; ne];
        for side in &tmesh.sides {
            if let Some(m) = side.minus {
                let (p, q) = (side.plus.triangle, m.triangle);
                if mask[p] && !mask[q] {
                    in_b[q] = true;
                }
                if mask[q] && !mask[p] {
                    in_b[p] = true;
                }
            }
        }
        let mut in_x = vec![false; ne];
        for m in measurements {
            for &s in &disc.layout(m.acquisition.edges()).sides {
                let e = tmesh.sides[s].plus.triangle;
                in_x[e] = !mask[e];
            }
        }
        let dofs_of = |flags: &[bool]| -> Vec<usize> {
            (0..ne).filter(|&e| flags[e]).flat_map(|e| e * ld..(e + 1) * ld).collect()
        };
        let (m_dofs, b_dofs, x_dofs) = (dofs_of(&mask), dofs_of(&in_b), dofs_of(&in_x));
        let n = space.dof_count();
        let slots = |dofs: &[usize]| {
            let mut s = vec![NONE; n];
            for (k, &d) in dofs.iter().enumerate() {
                s[d] = k;
            }
            s
        };
        let (m_slot, b_slot, x_slot) = (slots(&m_dofs), slots(&b_dofs), slots(&x_dofs));

        // A_NN in compressed columns over the renumbered N dofs
        let a = disc.matrix();
        let mut n_index = vec![NONE; n];
        let mut nn = 0;
        for d in 0..n {
            if m_slot[d] == NONE {
                n_index[d] = nn;
                nn += 1;
            }
        }
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in (0..n).filter(|&d| n_index[d] != NONE) {
            for k in a.col_ptr[j]..a.col_ptr[j + 1] {
                let i = a.row_idx[k];
                if n_index[i] != NONE {
                    row_idx.push(n_index[i]);
                    values.push(a.values[k]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        let symbolic = SymbolicSparseColMat::new_checked(nn, nn, col_ptr, None, row_idx);
        let ann = SparseColMat::new(symbolic, values);
        let sym = SymbolicLlt::try_new(ann.symbolic(), FaerSide::Lower)
            .map_err(|e| Error::SingularSystem(format!("symbolic factorization failed: {e:?}")))?;
        let llt = SparseLlt::try_new_with_symbolic(sym, ann.as_ref(), FaerSide::Lower)
            .map_err(|e| Error::SingularSystem(format!("Cholesky factorization failed: {e:?}")))?;
        let mut cols = Mat::<f64>::zeros(nn, b_dofs.len());
        for (k, &d) in b_dofs.iter().enumerate() {
            cols[(n_index[d], k)] = 1.0;
        }
        llt.solve_in_place(cols.as_mut());
        let g = Mat::from_fn(b_dofs.len(), b_dofs.len(), |i, j| cols[(n_index[b_dofs[i]], j)]);
        let xb = Mat::from_fn(x_dofs.len(), b_dofs.len(), |i, j| cols[(n_index[x_dofs[i]], j)]);
        Ok(Reference { mesh: disc.mesh, mask, m_dofs, b_dofs, x_dofs, m_slot, b_slot, x_slot, g, xb })
    }
}

impl CondensedObjective {
    pub fn new(model: Model, measurements: Vec<Measurement>, formula: ShapeFormula) -> Self {
        CondensedObjective { model, measurements, formula, reference: None, factor: None, mesh: None, remeshes: 0 }
    }

    fn mesh_for(&mut self, fault: &FaultSegment) -> Result<FaultMesh> {
        let current = self.reference.as_ref().map(|r| &r.mesh);
        let (mesh, rebuilt) = follow(&self.model, current, fault)?;
        if rebuilt || self.reference.is_none() {
            self.remeshes += 1;
            self.factor = None;
            self.reference = Some(Reference::new(&self.model, mesh.clone(), &self.measurements)?);
        }
        Ok(mesh)
    }
}

impl Objective for CondensedObjective {
    fn evaluate(&mut self, fault: &FaultSegment) -> Result<Evaluation> {
        let mesh = self.mesh_for(fault)?;
        let r = self.reference.as_ref().expect("set by mesh_for");
        let disc = self.model.discretize(mesh);
        let a = assemble_matrix_masked(&disc.space, disc.elasticity(), &disc.params, Some(&r.mask));
        let (nm, nb) = (r.m_dofs.len(), r.b_dofs.len());
        let mut amm = Mat::<f64>::zeros(nm, nm);
        let mut abm = Mat::<f64>::zeros(nb, nm);
        for (jm, &j) in r.m_dofs.iter().enumerate() {
            for k in a.col_ptr[j]..a.col_ptr[j + 1] {
                let i = a.row_idx[k];
                if r.m_slot[i] != NONE {
                    amm[(r.m_slot[i], jm)] = a.values[k];
                } else if r.b_slot[i] != NONE {
                    abm[(r.b_slot[i], jm)] = a.values[k];
                }
            }
        }
        let system = std::cell::RefCell::new(Condensed {
            amm: &amm,
            abm: &abm,
            g: &r.g,
            factor: &mut self.factor,
            stale: false,
        });
        let n = disc.space.dof_count();
        let scatter = |xm: &Mat<f64>, xb: &Mat<f64>, xx: Option<&Mat<f64>>| {
            let mut c = vec![0.0; n];
            if let Some(xx) = xx {
                for (k, &d) in r.x_dofs.iter().enumerate() {
                    c[d] = xx[(k, 0)];
                }
            }
            for (k, &d) in r.b_dofs.iter().enumerate() {
                c[d] = xb[(k, 0)];
            }
            for (k, &d) in r.m_dofs.iter().enumerate() {
                c[d] = xm[(k, 0)];
            }
            DgField { coeffs: c }
        };
        let forward = |m: &Measurement| -> Result<DgField> {
            let b = disc.slip_rhs(&m.slip);
            if b.iter().enumerate().any(|(d, v)| *v != 0.0 && r.m_slot[d] == NONE) {
                return Err(Error::InconsistentTopology("slip load outside the moving elements".into()));
            }
            let xm = system.borrow_mut().solve(&Mat::from_fn(nm, 1, |k, _| b[r.m_dofs[k]]))?;
            let t = &abm * &xm;
            Ok(scatter(&xm, &-(&r.g * &t), Some(&-(&r.xb * &t))))
        };
        let adjoint = |_: &Measurement, b: Vec<f64>| -> Result<DgField> {
            let mut bx = Mat::<f64>::zeros(r.x_dofs.len(), 1);
            for (d, v) in b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                if r.x_slot[d] != NONE {
                    bx[(r.x_slot[d], 0)] = *v;
                } else if r.m_slot[d] == NONE {
                    return Err(Error::InconsistentTopology("adjoint load outside the tracked elements".into()));
                }
            }
            let yb = r.xb.transpose() * &bx;
            let rhs = Mat::from_fn(nm, 1, |k, _| b[r.m_dofs[k]]) - abm.transpose() * &yb;
            let xm = system.borrow_mut().solve(&rhs)?;
            let xb = &yb - &r.g * (&abm * &xm);
            Ok(scatter(&xm, &xb, None))
        };
        let eval = accumulate(&disc, &self.measurements, self.formula, forward, adjoint)?;
        if system.into_inner().stale {
            self.factor = None;
        }
        self.mesh = Some(disc.mesh);
        Ok(eval)
    }

    fn mesh(&self) -> Option<&FaultMesh> {
        self.mesh.as_ref()
    }

    fn remeshes(&self) -> usize {
        self.remeshes
    }
}
