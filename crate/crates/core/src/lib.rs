//! Reconstruction of a buried straight fault from surface displacements.
//!
//! The forward model is plane linear elasticity on `[-1, 1]^2` with a
//! prescribed displacement jump (the slip) across the fault, clamped on the
//! bottom side and traction-free elsewhere. It is discretized with the
//! symmetric interior penalty DG method on meshes that conform to the fault.
//! The fault endpoints are recovered by steepest descent on a boundary
//! least-squares misfit, with gradients from an adjoint solve and the
//! distributed shape derivative.

pub mod dg;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod mesh;
pub mod objective;
pub mod quadrature;
pub mod recon;
pub mod problem;
pub mod shape;
pub mod slip;
pub mod synthetic;
pub mod tensors;

pub use error::{Error, Result};
pub use geometry::{FaultSegment, Point2, Vec2};
pub use mesh::{build_mesh, classify_sides, hat_field, move_fault, FaultMesh, MeshParams, SideClass, TriMesh};
pub use slip::SlipField;
pub use tensors::{ElasticityTensor, Matrix2};
