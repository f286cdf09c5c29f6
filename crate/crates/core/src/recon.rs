//! Steepest-descent reconstruction of the fault endpoints.
//!
//! Each iteration evaluates the misfit and its vertex gradient at the current
//! fault, summed over all measurements, and moves both endpoints by
//! `-alpha * grad`. The mesh follows the fault by node motion and is rebuilt
//! only when it would become too distorted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_admissible, FaultSegment, Vec2};
use crate::objective::{CondensedObjective, DirectObjective, Evaluation, Objective};
use crate::problem::Model;
use crate::shape::{ShapeFormula, ShapeGradient};
use crate::synthetic::{Acquisition, Measurement};

/// What to do with an update that leaves the admissible region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionPolicy {
    /// Fail with [`Error::FaultOutsideAdmissibleRegion`].
    Reject,
    /// Move the endpoint to the nearest admissible point.
    #[default]
    Project,
}

/// Linear algebra used for the forward and adjoint solves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Full factorization at every iteration.
    Direct,
    /// Condensation onto the elements that move with the fault.
    #[default]
    Condensed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub max_iter: usize,
    /// Gradient tolerance on the largest component.
    pub tol: f64,
    /// Step length.
    pub alpha: f64,
    /// Iterations before the gradient test may stop the loop.
    pub n_iter_min: usize,
    pub projection: ProjectionPolicy,
    pub formula: ShapeFormula,
    pub solver: SolverKind,
    /// Consecutive iterations of negligible misfit change that stop the loop.
    pub stall_window: usize,
    /// Relative misfit change counted as negligible.
    pub stall_rel: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            max_iter: 5000,
            tol: 1e-7,
            alpha: 1e-6,
            n_iter_min: 150,
            projection: ProjectionPolicy::Project,
            formula: ShapeFormula::Discrete,
            solver: SolverKind::Condensed,
            stall_window: 500,
            stall_rel: 1e-15,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("inversion.alpha", "alpha must be > 0"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("inversion.tol", "tol must be > 0"));
        }
        if self.max_iter < 1 {
            return Err(Error::config("inversion.max_iter", "max_iter must be >= 1"));
        }
        if !(self.stall_rel >= 0.0) {
            return Err(Error::config("inversion.stall_rel", "stall_rel must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    Converged,
    MaxIter,
    Stalled,
}

/// Loop state after `k` iterations.
pub struct ReconState {
    pub k: usize,
    pub fault: FaultSegment,
    pub gradient: Option<ShapeGradient>,
    pub misfit_history: Vec<f64>,
    pub grad_history: Vec<f64>,
    pub vertex_history: Vec<[[f64; 2]; 2]>,
}

impl ReconState {
    pub fn new(fault: FaultSegment) -> Self {
        ReconState {
            k: 0,
            fault,
            gradient: None,
            misfit_history: Vec::new(),
            grad_history: Vec::new(),
            vertex_history: Vec::new(),
        }
    }
}

/// Result of a reconstruction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub config: ReconConfig,
    pub termination: Termination,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vertices_true: Option<[[f64; 2]; 2]>,
    pub vertices_initial: [[f64; 2]; 2],
    pub vertices_final: [[f64; 2]; 2],
    /// Misfit at the initial and at the final vertices.
    pub misfit_initial: f64,
    pub misfit_final: f64,
    /// Misfit at the start of each iteration.
    pub misfit_series: Vec<f64>,
    /// Largest gradient component at the start of each iteration.
    pub grad_series: Vec<f64>,
    /// Vertices at the start of each iteration.
    pub vertex_series: Vec<[[f64; 2]; 2]>,
    /// Meshes generated from scratch, the first included.
    pub remeshes: usize,
}

impl ReconReport {
    /// Largest endpoint distance to the true vertices.
    pub fn vertex_error(&self) -> Option<f64> {
        let t = self.vertices_true?;
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        Some(d(t[0], self.vertices_final[0]).max(d(t[1], self.vertices_final[1])))
    }
}

fn vertices(f: &FaultSegment) -> [[f64; 2]; 2] {
    [f.p0.to_array(), f.p1.to_array()]
}

/// Descent update `P - alpha * grad` with the admissibility policy applied.
pub fn update_vertices(fault: &FaultSegment, grad: &ShapeGradient, cfg: &ReconConfig, delta_min: f64) -> Result<FaultSegment> {
    let d = grad.derivative;
    let mut p = [fault.p0, fault.p1];
    for l in 0..2 {
        let q = p[l] - Vec2::new(d[l][0], d[l][1]) * cfg.alpha;
        p[l] = match cfg.projection {
            ProjectionPolicy::Project => project_admissible(q, delta_min),
            ProjectionPolicy::Reject => q,
        };
    }
    let next = fault.with_vertices(p[0], p[1]);
    next.validate(delta_min)?;
    Ok(next)
}

/// One iteration: evaluate at the current fault, record, and update.
/// Returns the evaluation at the fault the step started from.
pub fn step(state: &mut ReconState, objective: &mut dyn Objective) -> Result<Evaluation> {
    let eval = objective.evaluate(&state.fault)?;
    state.misfit_history.push(eval.misfit);
    state.grad_history.push(eval.gradient.max_abs());
    state.vertex_history.push(vertices(&state.fault));
    state.gradient = Some(eval.gradient);
    state.k += 1;
    Ok(eval)
}

fn objective_for(model: &Model, measurements: &[Measurement], cfg: &ReconConfig) -> Box<dyn Objective> {
    match cfg.solver {
        SolverKind::Direct => Box::new(DirectObjective::new(*model, measurements.to_vec(), cfg.formula)),
        SolverKind::Condensed => Box::new(CondensedObjective::new(*model, measurements.to_vec(), cfg.formula)),
    }
}

/// Runs the descent loop from `initial` and reports the outcome.
///
/// The loop stops with `Converged` once more than `n_iter_min` iterations
/// are done and the largest gradient component is below `tol`, with
/// `Stalled` after `stall_window` consecutive iterations of negligible
/// misfit change, and with `MaxIter` after `max_iter` iterations.
pub fn run(
    model: &Model,
    initial: &FaultSegment,
    measurements: &[Measurement],
    cfg: &ReconConfig,
    truth: Option<&FaultSegment>,
    observer: impl FnMut(&ReconState),
) -> Result<ReconReport> {
    cfg.validate()?;
    if measurements.is_empty() {
        return Err(Error::config("data.measurements", "at least one measurement is required"));
    }
    let mut objective = objective_for(model, measurements, cfg);
    run_with(objective.as_mut(), initial, cfg, model.mesh.delta_min, truth, observer)
}

/// [`run`] on an arbitrary objective.
pub fn run_with(
    objective: &mut dyn Objective,
    initial: &FaultSegment,
    cfg: &ReconConfig,
    delta_min: f64,
    truth: Option<&FaultSegment>,
    mut observer: impl FnMut(&ReconState),
) -> Result<ReconReport> {
    cfg.validate()?;
    initial.validate(delta_min)?;
    let mut state = ReconState::new(initial.clone());
    let mut termination = Termination::MaxIter;
    let mut quiet = 0;
    loop {
        let eval = step(&mut state, objective)?;
        observer(&state);
        if state.k > cfg.n_iter_min && eval.gradient.max_abs() < cfg.tol {
            termination = Termination::Converged;
            break;
        }
        if let [.., prev, last] = state.misfit_history[..] {
            quiet = if (last - prev).abs() <= cfg.stall_rel * prev.abs() { quiet + 1 } else { 0 };
            if quiet >= cfg.stall_window {
                termination = Termination::Stalled;
                break;
            }
        }
        if state.k == cfg.max_iter {
            break;
        }
        state.fault = update_vertices(&state.fault, &eval.gradient, cfg, delta_min)?;
    }
    Ok(ReconReport {
        config: *cfg,
        termination,
        iterations: state.k,
        vertices_true: truth.map(vertices),
        vertices_initial: vertices(initial),
        vertices_final: vertices(&state.fault),
        misfit_initial: state.misfit_history[0],
        misfit_final: *state.misfit_history.last().expect("one iteration"),
        misfit_series: state.misfit_history,
        grad_series: state.grad_history,
        vertex_series: state.vertex_history,
        remeshes: objective.remeshes(),
    })
}

/// SVG overlay of the domain, the acquisition sides and the true, initial and
/// reconstructed faults.
pub fn overlay_svg(report: &ReconReport, acquisition: Acquisition) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 20.0;
    let map = |p: [f64; 2]| (PAD + (p[0] + 1.0) * 0.5 * SIZE, PAD + (1.0 - p[1]) * 0.5 * SIZE);
    let line = |a: [f64; 2], b: [f64; 2], style: &str| {
        let (x0, y0) = map(a);
        let (x1, y1) = map(b);
        format!("  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\" {style}/>\n")
    };
    let total = SIZE + 2.0 * PAD;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{total}\" viewBox=\"0 0 {total} {total}\">\n"
    );
    s.push_str(&format!(
        "  <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n"
    ));
    for e in acquisition.edges() {
        let (a, b) = e.endpoints();
        s.push_str(&line(a.to_array(), b.to_array(), "stroke=\"#f0a020\" stroke-width=\"5\" stroke-opacity=\"0.6\""));
    }
    if let Some([a, b]) = report.vertices_true {
        s.push_str(&line(a, b, "stroke=\"black\" stroke-width=\"3\""));
    }
    let [a, b] = report.vertices_initial;
    s.push_str(&line(a, b, "stroke=\"green\" stroke-width=\"2\" stroke-dasharray=\"8 5\""));
    let [a, b] = report.vertices_final;
    s.push_str(&line(a, b, "stroke=\"red\" stroke-width=\"2\""));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::mesh::FaultMesh;
    use crate::slip::SlipField;

    /// `J = scale/2 |P - target|^2` over both vertices.
    struct Quadratic {
        target: [Point2; 2],
        scale: f64,
        calls: usize,
    }

    impl Objective for Quadratic {
        fn evaluate(&mut self, fault: &FaultSegment) -> Result<Evaluation> {
            self.calls += 1;
            let d = [fault.p0 - self.target[0], fault.p1 - self.target[1]];
            let misfit = 0.5 * self.scale * (d[0].dot(d[0]) + d[1].dot(d[1]));
            let g = ShapeGradient::from_derivatives(d.map(|v| [self.scale * v.x, self.scale * v.y]));
            Ok(Evaluation { misfit, misfits: vec![misfit], gradient: g })
        }
        fn mesh(&self) -> Option<&FaultMesh> {
            None
        }
        fn remeshes(&self) -> usize {
            0
        }
    }

    fn fault(a: [f64; 2], b: [f64; 2]) -> FaultSegment {
        FaultSegment::new(Point2::new(a[0], a[1]), Point2::new(b[0], b[1]), SlipField::constant())
    }

    fn quadratic(scale: f64) -> Quadratic {
        Quadratic { target: [Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0)], scale, calls: 0 }
    }

    #[test]
    fn update_follows_negative_gradient() {
        let f = fault([0.0, 0.0], [0.5, 0.0]);
        let g = ShapeGradient::from_derivatives([[1000.0, -2000.0], [0.0, 0.0]]);
        let next = update_vertices(&f, &g, &ReconConfig::default(), 0.1).unwrap();
        assert!((next.p0.x + 0.001).abs() < 1e-15);
        assert!((next.p0.y - 0.002).abs() < 1e-15);
        assert_eq!(next.p1, f.p1);
    }

    #[test]
    fn zero_gradient_keeps_vertices() {
        let f = fault([-0.3, 0.1], [0.3, 0.2]);
        let next = update_vertices(&f, &ShapeGradient::default(), &ReconConfig::default(), 0.1).unwrap();
        assert_eq!(next, f);
    }

    #[test]
    fn reject_and_project_policies() {
        let f = fault([-0.85, 0.0], [0.4, 0.0]);
        let g = ShapeGradient::from_derivatives([[1e5, 0.0], [0.0, 0.0]]);
        let reject = ReconConfig { projection: ProjectionPolicy::Reject, ..Default::default() };
        assert!(matches!(
            update_vertices(&f, &g, &reject, 0.1),
            Err(Error::FaultOutsideAdmissibleRegion { .. })
        ));
        let next = update_vertices(&f, &g, &ReconConfig::default(), 0.1).unwrap();
        assert!((next.p0.x + 0.9).abs() < 1e-12, "{:?}", next.p0);
    }

    #[test]
    fn max_iter_precedes_minimum_iterations() {
        let cfg = ReconConfig { max_iter: 3, ..Default::default() };
        let mut obj = quadratic(1.0);
        let r = run_with(&mut obj, &fault([-0.4, 0.1], [0.4, 0.1]), &cfg, 0.1, None, |_| {}).unwrap();
        assert_eq!(r.termination, Termination::MaxIter);
        assert_eq!(r.iterations, 3);
        assert_eq!(r.misfit_series.len(), 3);
        assert_eq!(r.grad_series.len(), 3);
        assert_eq!(r.vertex_series.len(), 3);
        assert_eq!(obj.calls, 3);
    }

    #[test]
    fn single_iteration_reports_initial_state() {
        let cfg = ReconConfig { max_iter: 1, ..Default::default() };
        let init = fault([-0.4, 0.1], [0.4, 0.1]);
        let r = run_with(&mut quadratic(1.0), &init, &cfg, 0.1, None, |_| {}).unwrap();
        assert_eq!(r.misfit_series.len(), 1);
        assert_eq!(r.vertices_final, r.vertices_initial);
        assert_eq!(r.misfit_final, r.misfit_initial);
    }

    #[test]
    fn convergence_waits_for_minimum_iterations() {
        let cfg = ReconConfig { alpha: 0.5, ..Default::default() };
        let r = run_with(&mut quadratic(1.0), &fault([-0.4, 0.1], [0.4, 0.1]), &cfg, 0.1, None, |_| {}).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.iterations, cfg.n_iter_min + 1);
        assert!(r.vertex_series.iter().skip(1).all(|v| v[0][1].abs() < 0.1));
    }

    #[test]
    fn constant_misfit_stalls() {
        let cfg = ReconConfig { stall_window: 20, n_iter_min: 1000, ..Default::default() };
        let init = fault([-0.4, 0.0], [0.4, 0.0]);
        let r = run_with(&mut quadratic(0.0), &init, &cfg, 0.1, None, |_| {}).unwrap();
        assert_eq!(r.termination, Termination::Stalled);
        assert_eq!(r.iterations, 21);
    }

    #[test]
    fn descent_is_monotone_on_a_quadratic() {
        let cfg = ReconConfig { max_iter: 200, alpha: 0.01, ..Default::default() };
        let r = run_with(&mut quadratic(1.0), &fault([-0.2, 0.3], [0.5, -0.2]), &cfg, 0.1, None, |_| {}).unwrap();
        assert!(r.misfit_series.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_step_is_rejected() {
        let cfg = ReconConfig { alpha: -1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(ReconConfig { tol: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn overlay_contains_all_faults() {
        let r = run_with(
            &mut quadratic(1.0),
            &fault([-0.4, 0.1], [0.4, 0.1]),
            &ReconConfig { max_iter: 2, ..Default::default() },
            0.1,
            Some(&fault([-0.4, 0.0], [0.4, 0.0])),
            |_| {},
        )
        .unwrap();
        let svg = overlay_svg(&r, Acquisition::AllExposed);
        assert_eq!(svg.matches("<line").count(), 6);
        assert!(svg.contains("stroke-dasharray"));
    }
}
