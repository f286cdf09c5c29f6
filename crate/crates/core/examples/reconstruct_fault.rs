//! Steepest-descent reconstruction of a horizontal fault from one noisy
//! measurement, on a coarse mesh so it runs in seconds. Writes the overlay
//! SVG next to the working directory.
//!
//! cargo run --example reconstruct_fault -- 2000

use faultscope::problem::Model;
use faultscope::recon::{overlay_svg, run, ReconConfig};
use faultscope::synthetic::{add_noise, make_measurement, Acquisition};
use faultscope::{FaultSegment, Point2, SlipField, Vec2};

fn main() -> faultscope::Result<()> {
    let max_iter: usize = std::env::args().nth(1).map(|s| s.parse().expect("iteration count")).unwrap_or(2000);
    let truth = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::constant());
    let data = add_noise(&make_measurement(&Model::new(0.05), &truth, Acquisition::AllExposed)?, 7e-4, 1);
    let shift = Vec2::new(0.0, 0.15);
    let initial = truth.with_vertices(truth.p0 + shift, truth.p1 + shift);
    let cfg = ReconConfig { max_iter, ..Default::default() };
    let report = run(&Model::new(0.1), &initial, &[data], &cfg, Some(&truth), |s| {
        if s.k % 500 == 0 {
            let v = s.vertex_history.last().unwrap();
            println!("k={:5} misfit {:.4e} vertices {:.4?}", s.k, s.misfit_history.last().unwrap(), v);
        }
    })?;
    println!(
        "{:?} after {} iterations: vertex error {:.4}, misfit {:.4e} -> {:.4e}",
        report.termination,
        report.iterations,
        report.vertex_error().unwrap(),
        report.misfit_initial,
        report.misfit_final
    );
    std::fs::write("reconstruction.svg", overlay_svg(&report, Acquisition::AllExposed)).expect("write svg");
    Ok(())
}
