//! The condensed objective against full refactorization along a path of
//! descent-sized steps.
//!
//! cargo run --example condensed_solver

use std::time::Instant;

use faultscope::objective::{CondensedObjective, DirectObjective, Objective};
use faultscope::problem::Model;
use faultscope::shape::ShapeFormula;
use faultscope::synthetic::{make_measurement, Acquisition};
use faultscope::{FaultSegment, Point2, SlipField, Vec2};

fn main() -> faultscope::Result<()> {
    let model = Model::new(0.05);
    let truth = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::constant());
    let data = vec![make_measurement(&model.with_h(0.02), &truth, Acquisition::AllExposed)?];
    let mut direct = DirectObjective::new(model, data.clone(), ShapeFormula::Discrete);
    let mut condensed = CondensedObjective::new(model, data, ShapeFormula::Discrete);
    let (mut t_direct, mut t_condensed) = (0.0, 0.0);
    for k in 0..=20 {
        let shift = Vec2::new(2e-5 * k as f64, 0.15 - 3e-5 * k as f64);
        let fault = truth.with_vertices(truth.p0 + shift, truth.p1 + shift);
        let t = Instant::now();
        let a = direct.evaluate(&fault)?;
        let ta = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let b = condensed.evaluate(&fault)?;
        let tb = t.elapsed().as_secs_f64();
        if k == 0 {
            println!("first evaluation: direct {:.0} ms, condensed {:.0} ms with setup", 1e3 * ta, 1e3 * tb);
        } else {
            t_direct += ta;
            t_condensed += tb;
        }
        let dg = (0..2)
            .flat_map(|l| (0..2).map(move |k| (l, k)))
            .map(|(l, k)| (a.gradient.derivative[l][k] - b.gradient.derivative[l][k]).abs())
            .fold(0.0, f64::max);
        println!("step {k}: misfit {:.10e} vs {:.10e}, gradient gap {dg:.2e}", a.misfit, b.misfit);
    }
    println!("after setup: direct {:.1} ms/eval, condensed {:.1} ms/eval", 50.0 * t_direct, 50.0 * t_condensed);
    Ok(())
}
