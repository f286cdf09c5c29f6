//! A forward model discretized on one fault-conforming mesh, and the direct
//! solver that factorizes it once for every forward and adjoint solve.

use crate::dg::{
    assemble_boundary_load, assemble_matrix, assemble_slip_rhs, boundary_trace, DgField, DgParams, DgSpace,
    Factorization, SolverCache, TraceLayout,
};
use crate::error::Result;
use crate::geometry::{FaultSegment, Vec2};
use crate::mesh::{FaultMesh, MeshParams, SquareEdge};
use crate::slip::SlipField;
use crate::tensors::ElasticityTensor;

/// Physics and discretization settings shared by all solves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub elasticity: ElasticityTensor,
    pub degree: usize,
    pub beta: f64,
    pub fault_order: Option<usize>,
    pub mesh: MeshParams,
}

impl Model {
    /// `lambda = mu = 1`, linear elements, `beta = 10`.
    pub fn new(h_target: f64) -> Self {
        Model {
            elasticity: ElasticityTensor::unit(),
            degree: 1,
            beta: 10.0,
            fault_order: None,
            mesh: MeshParams::new(h_target),
        }
    }

    pub fn with_h(&self, h_target: f64) -> Self {
        Model { mesh: MeshParams { h_target, ..self.mesh }, ..*self }
    }

    pub fn build_mesh(&self, fault: &FaultSegment) -> Result<FaultMesh> {
        FaultMesh::build(fault, &self.mesh)
    }

    /// Function space and penalty parameters on `mesh`.
    pub fn discretize(&self, mesh: FaultMesh) -> Discretization {
        let space = DgSpace::with_fault_order(mesh.fine.clone(), self.degree, self.fault_order);
        let params = DgParams {
            degree: self.degree,
            beta: self.beta,
            h_penalty: mesh.nominal_h(),
            fault_order: self.fault_order,
        };
        Discretization { model: *self, mesh, space, params }
    }

    /// Assembles and factorizes on `mesh`.
    pub fn solver(&self, mesh: FaultMesh) -> Result<DirectSolver> {
        self.solver_cached(mesh, &mut SolverCache::default())
    }

    pub fn solver_cached(&self, mesh: FaultMesh, cache: &mut SolverCache) -> Result<DirectSolver> {
        let disc = self.discretize(mesh);
        let factor = cache.factorize(disc.matrix())?;
        Ok(DirectSolver { disc, factor })
    }
}

/// A SIPG discretization on a fixed mesh.
pub struct Discretization {
    pub model: Model,
    pub mesh: FaultMesh,
    pub space: DgSpace,
    pub params: DgParams,
}

impl Discretization {
    pub fn fault(&self) -> &FaultSegment {
        &self.mesh.fault
    }

    pub fn elasticity(&self) -> &ElasticityTensor {
        &self.model.elasticity
    }

    pub fn matrix(&self) -> crate::dg::BlockMatrix {
        assemble_matrix(&self.space, &self.model.elasticity, &self.params)
    }

    /// Load vector of the slip `slip` on the current fault.
    pub fn slip_rhs(&self, slip: &SlipField) -> Vec<f64> {
        assemble_slip_rhs(&self.space, &self.model.elasticity, &self.params, &self.mesh.fault, slip)
    }

    /// Adjoint load of `residual` given at the layout points.
    pub fn adjoint_rhs(&self, layout: &TraceLayout, residual: &[Vec2]) -> Vec<f64> {
        assemble_boundary_load(&self.space, layout, residual)
    }

    pub fn layout(&self, edges: &[SquareEdge]) -> TraceLayout {
        TraceLayout::new(&self.space, edges)
    }

    pub fn trace(&self, u: &DgField, layout: &TraceLayout) -> Vec<Vec2> {
        boundary_trace(&self.space, u, layout)
    }
}

/// A discretization with its sparse Cholesky factorization.
pub struct DirectSolver {
    pub disc: Discretization,
    pub factor: Factorization,
}

impl DirectSolver {
    /// Forward solution for the slip `slip` on the current fault.
    pub fn forward(&self, slip: &SlipField) -> Result<DgField> {
        self.factor.solve_field(&self.disc.slip_rhs(slip))
    }

    /// Adjoint solution driven by `residual` at the layout points.
    pub fn adjoint(&self, layout: &TraceLayout, residual: &[Vec2]) -> Result<DgField> {
        self.factor.solve_field(&self.disc.adjoint_rhs(layout, residual))
    }
}
