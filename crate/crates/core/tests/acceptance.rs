//! Acceptance criteria, run in order with one PASS/FAIL line each.
//!
//! `FAULTSCOPE_CRITERIA=3,5` restricts the run to the listed criteria.

use std::time::{Duration, Instant};

use faer::{Mat, Side};
use faultscope::config::GradcheckFormula;
use faultscope::dg::{assemble_matrix, DgParams, DgSpace};
use faultscope::gradcheck::{gradcheck, GradcheckOptions};
use faultscope::mesh::{FaultMesh, MeshParams};
use faultscope::problem::Model;
use faultscope::recon::{run, ReconConfig, ReconReport};
use faultscope::shape::{
    boundary_shape_derivative, distributed_shape_derivative, misfit, residual, slip_term, DeformationField,
    ShapeFormula,
};
use faultscope::slip::Bump;
use faultscope::synthetic::{add_noise, make_measurement, noise_level, Acquisition, Measurement};
use faultscope::{ElasticityTensor, FaultSegment, Point2, SlipField, Vec2};

const H_INVERSION: f64 = 0.05;
const H_DATA: f64 = 0.02;
const NOISE_A: f64 = 7e-4;
const OFFSET: f64 = 0.15;
const MAX_ITER: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn horizontal() -> (Point2, Point2) {
    (Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0))
}

fn oblique() -> (Point2, Point2) {
    (Point2::new(-0.4, -0.15), Point2::new(0.4, 0.0))
}

fn unit(k: usize) -> Vec2 {
    if k == 0 {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    }
}

/// Noiseless data on the data mesh and a guess off the truth.
fn gradient_case(model: &Model, (p0, p1): (Point2, Point2), slip: SlipField) -> (FaultSegment, Measurement) {
    let truth = FaultSegment::new(p0, p1, slip);
    let m = make_measurement(&model.with_h(H_DATA), &truth, Acquisition::AllExposed).unwrap();
    let guess = truth.with_vertices(p0 + Vec2::new(0.05, 0.1), p1 + Vec2::new(0.03, 0.12));
    (guess, m)
}

fn noisy_data(truth: (Point2, Point2), slips: &[SlipField], acquisition: Acquisition) -> Vec<Measurement> {
    let model = Model::new(H_DATA);
    slips
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let fault = FaultSegment::new(truth.0, truth.1, s.clone());
            add_noise(&make_measurement(&model, &fault, acquisition).unwrap(), NOISE_A, 1 + i as u64)
        })
        .collect()
}

fn reconstruct(truth: (Point2, Point2), slips: &[SlipField], acquisition: Acquisition) -> ReconReport {
    let data = noisy_data(truth, slips, acquisition);
    let exact = FaultSegment::new(truth.0, truth.1, slips[0].clone());
    let shift = Vec2::new(0.0, OFFSET);
    let initial = exact.with_vertices(truth.0 + shift, truth.1 + shift);
    let cfg = ReconConfig { max_iter: MAX_ITER, ..Default::default() };
    run(&Model::new(H_INVERSION), &initial, &data, &cfg, Some(&exact), |_| {}).unwrap()
}

fn summary(r: &ReconReport) -> String {
    format!(
        "{:?} after {} iterations, vertex error {:.4}, misfit ratio {:.4}",
        r.termination,
        r.iterations,
        r.vertex_error().unwrap(),
        r.misfit_final / r.misfit_initial
    )
}

fn within(t: Instant, limit: Duration, o: Outcome) -> Outcome {
    let elapsed = t.elapsed();
    Outcome {
        pass: o.pass && elapsed <= limit,
        detail: format!("{} [{:.1}s, limit {}s]", o.detail, elapsed.as_secs_f64(), limit.as_secs()),
    }
}

fn zero_slip() -> Outcome {
    let mut worst: f64 = 0.0;
    for h in [0.2, 0.1, 0.05] {
        let model = Model::new(h);
        let fault = FaultSegment::new(horizontal().0, horizontal().1, SlipField::zero());
        let solver = model.solver(model.build_mesh(&fault).unwrap()).unwrap();
        worst = worst.max(solver.forward(&SlipField::zero()).unwrap().max_abs());
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max |u_h| = {worst:.2e}") }
}

fn coercivity() -> Outcome {
    let fault = FaultSegment::new(Point2::new(-0.3, 0.0), Point2::new(0.3, 0.0), SlipField::constant());
    let params = MeshParams { h_target: 0.8, h_coarse: 0.8, delta_min: 0.1, exclusion: 0.3, ..Default::default() };
    let mesh = FaultMesh::build(&fault, &params).unwrap();
    let triangles = mesh.fine.n_triangles();
    let mut pass = triangles <= 32;
    let mut detail = format!("{triangles} triangles");
    for r in [1, 2] {
        let space = DgSpace::new(mesh.fine.clone(), r);
        let a = assemble_matrix(&space, &ElasticityTensor::unit(), &DgParams::new(r, 10.0, mesh.nominal_h()));
        let dense = a.to_dense();
        let n = dense.len();
        let m = Mat::<f64>::from_fn(n, n, |i, j| dense[i][j]);
        let asym = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs()).fold(0.0, f64::max);
        let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].abs()).fold(0.0, f64::max);
        let lambda_min = m.self_adjoint_eigenvalues(Side::Lower).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        pass &= asym <= 1e-14 * scale && lambda_min > 0.0;
        detail += &format!(", r={r}: asymmetry {:.1e}, lambda_min {lambda_min:.3e}", asym / scale);
    }
    Outcome { pass, detail }
}

fn shape_gradient() -> Outcome {
    let model = Model::new(H_INVERSION);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut continuous: f64 = 0.0;
    for geometry in [horizontal(), oblique()] {
        for slip in [SlipField::constant(), SlipField::compact()] {
            let (at, m) = gradient_case(&model, geometry, slip);
            let formulas = [GradcheckFormula::Discrete, GradcheckFormula::Continuous];
            let rows = gradcheck(&model, &at, &[m], &formulas, &GradcheckOptions::default()).unwrap();
            for r in &rows {
                if r.formula == "discrete" {
                    pass &= r.passed();
                    if r.analytic.abs() > 1e-8 {
                        worst = worst.max(r.rel_err);
                    }
                } else {
                    continuous = continuous.max(r.rel_err);
                }
            }
        }
    }
    Outcome {
        pass,
        detail: format!("worst relative error {worst:.2e} (continuous-form reference {continuous:.2e})"),
    }
}

fn slip_derivative() -> Outcome {
    let model = Model::new(H_INVERSION);
    let (at, m) = gradient_case(&model, horizontal(), SlipField::compact());
    let solver = model.solver(model.build_mesh(&at).unwrap()).unwrap();
    let disc = &solver.disc;
    let layout = disc.layout(m.acquisition.edges());
    let u = solver.forward(&m.slip).unwrap();
    let w = solver.adjoint(&layout, &residual(&layout, &disc.trace(&u, &layout), &m).unwrap()).unwrap();
    let h = SlipField::custom([1.0, -0.5], Some(Bump { half_width: 0.3, exponent: 4 }));
    let analytic = slip_term(disc, &u, &w, &h, ShapeFormula::Discrete);
    let tau = 1e-4;
    let j = |c: f64| {
        let b: Vec<f64> = disc.slip_rhs(&m.slip).iter().zip(disc.slip_rhs(&h.scaled(c))).map(|(a, b)| a + b).collect();
        let u = solver.factor.solve_field(&b).unwrap();
        misfit(&layout, &disc.trace(&u, &layout), &m).unwrap()
    };
    let fd = (j(tau) - j(-tau)) / (2.0 * tau);
    let rel = (analytic - fd).abs() / fd.abs();
    Outcome { pass: rel <= 0.01, detail: format!("analytic {analytic:.6e}, difference {fd:.6e}, relative {rel:.2e}") }
}

fn boundary_consistency() -> Outcome {
    let mut errors = Vec::new();
    for h in [0.05, 0.025] {
        let model = Model::new(h);
        let (at, m) = gradient_case(&model, horizontal(), SlipField::compact());
        let solver = model.solver(model.build_mesh(&at).unwrap()).unwrap();
        let disc = &solver.disc;
        let layout = disc.layout(m.acquisition.edges());
        let u = solver.forward(&m.slip).unwrap();
        let w = solver.adjoint(&layout, &residual(&layout, &disc.trace(&u, &layout), &m).unwrap()).unwrap();
        let mut rel = [0.0; 4];
        for l in 0..2 {
            for k in 0..2 {
                let field = DeformationField::fault_vertex(&disc.mesh, l, unit(k));
                let d = distributed_shape_derivative(disc, &u, &w, &m.slip, &field, None, ShapeFormula::Continuous);
                let b = boundary_shape_derivative(disc, &w, &m.slip, &field, None).unwrap();
                rel[2 * l + k] = (b - d).abs() / d.abs();
            }
        }
        errors.push(rel);
    }
    let coarse_ok = errors[0].iter().all(|&e| e <= 0.05);
    let improves = errors[0].iter().zip(&errors[1]).all(|(a, b)| b <= a);
    Outcome {
        pass: coarse_ok && improves,
        detail: format!("relative gaps h=0.05 {:.3?}, h=0.025 {:.3?}", errors[0], errors[1]),
    }
}

fn reconstruction_constant() -> (Outcome, String) {
    let r = reconstruct(horizontal(), &[SlipField::constant()], Acquisition::AllExposed);
    let pass = r.vertex_error().unwrap() <= 0.1 && r.misfit_final <= 0.1 * r.misfit_initial;
    (Outcome { pass, detail: summary(&r) }, serde_json::to_string(&r).unwrap())
}

fn reconstruction_compact() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, geometry) in [("horizontal", horizontal()), ("oblique", oblique())] {
        let r = reconstruct(geometry, &[SlipField::compact()], Acquisition::AllExposed);
        pass &= r.vertex_error().unwrap() <= 0.15;
        parts.push(format!("{name}: {}", summary(&r)));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn single_side() -> Outcome {
    let one = reconstruct(horizontal(), &[SlipField::compact()], Acquisition::TopOnly);
    let two = reconstruct(horizontal(), &[SlipField::compact(), SlipField::second()], Acquisition::TopOnly);
    let (e1, e2) = (one.vertex_error().unwrap(), two.vertex_error().unwrap());
    Outcome {
        pass: e1 > 0.1 && e2 <= 0.75 * e1,
        detail: format!("one measurement: {}; two: {}; reduction {:.1}%", summary(&one), summary(&two), 100.0 * (1.0 - e2 / e1)),
    }
}

fn noise_calibration() -> (Outcome, String) {
    let fault = FaultSegment::new(horizontal().0, horizontal().1, SlipField::constant());
    let clean = make_measurement(&Model::new(H_DATA), &fault, Acquisition::AllExposed).unwrap();
    let mut levels: Vec<f64> = (0..100).map(|seed| noise_level(&add_noise(&clean, NOISE_A, seed), &clean).unwrap()).collect();
    let report = serde_json::to_string(&serde_json::json!({ "a": NOISE_A, "levels": levels })).unwrap();
    levels.sort_by(f64::total_cmp);
    let (lo, hi) = (levels[0], levels[99]);
    let median = 0.5 * (levels[49] + levels[50]);
    let pass = lo >= 5e-4 && hi <= 2e-2 && (2e-3..=1.3e-2).contains(&median);
    let detail = format!("range [{:.3}%, {:.3}%], median {:.3}%", 100.0 * lo, 100.0 * hi, 100.0 * median);
    (Outcome { pass, detail }, report)
}

#[test]
fn acceptance() {
    faer::set_global_parallelism(faer::Par::Seq);
    let only: Option<Vec<usize>> = std::env::var("FAULTSCOPE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let wanted = |c: usize| only.as_ref().is_none_or(|o| o.contains(&c));
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |c: usize, name: &'static str, o: Outcome| {
        println!("criterion {c:2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((c, name, o));
    };

    if wanted(1) {
        let t = Instant::now();
        record(1, "zero-slip exactness", within(t, Duration::from_secs(10), zero_slip()));
    }
    if wanted(2) {
        let t = Instant::now();
        record(2, "SIPG coercivity", within(t, Duration::from_secs(5), coercivity()));
    }
    if wanted(3) {
        let t = Instant::now();
        record(3, "shape gradient against differences", within(t, minutes(5), shape_gradient()));
    }
    if wanted(4) {
        let t = Instant::now();
        record(4, "slip derivative", within(t, minutes(1), slip_derivative()));
    }
    if wanted(5) {
        let t = Instant::now();
        record(5, "distributed against boundary form", within(t, minutes(5), boundary_consistency()));
    }
    let mut constant_json = None;
    if wanted(6) || wanted(10) {
        let t = Instant::now();
        let (o, json) = reconstruction_constant();
        constant_json = Some(json);
        if wanted(6) {
            record(6, "reconstruction, constant slip", within(t, minutes(15), o));
        }
    }
    if wanted(7) {
        let t = Instant::now();
        record(7, "reconstruction, compact slip", within(t, minutes(30), reconstruction_compact()));
    }
    if wanted(8) {
        let t = Instant::now();
        record(8, "single-side degradation", within(t, minutes(45), single_side()));
    }
    let mut noise_json = None;
    if wanted(9) || wanted(10) {
        let t = Instant::now();
        let (o, json) = noise_calibration();
        noise_json = Some(json);
        if wanted(9) {
            record(9, "noise calibration", within(t, minutes(1), o));
        }
    }
    if wanted(10) {
        let again_constant = reconstruction_constant().1;
        let again_noise = noise_calibration().1;
        let same_constant = constant_json.as_deref() == Some(again_constant.as_str());
        let same_noise = noise_json.as_deref() == Some(again_noise.as_str());
        record(
            10,
            "determinism",
            Outcome {
                pass: same_constant && same_noise,
                detail: format!("reconstruction report identical: {same_constant}, noise report identical: {same_noise}"),
            },
        );
    }

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
