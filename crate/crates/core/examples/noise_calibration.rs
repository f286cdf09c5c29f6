//! Realized noise levels over many seeds at a fixed noise half-width.
//!
//! cargo run --example noise_calibration -- 7e-4

use faultscope::problem::Model;
use faultscope::synthetic::{add_noise, make_measurement, noise_level, Acquisition};
use faultscope::{FaultSegment, Point2, SlipField};

fn main() -> faultscope::Result<()> {
    let a: f64 = std::env::args().nth(1).map(|s| s.parse().expect("noise half-width")).unwrap_or(7e-4);
    let fault = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::constant());
    let clean = make_measurement(&Model::new(0.02), &fault, Acquisition::AllExposed)?;
    let mut levels = (0..100).map(|seed| noise_level(&add_noise(&clean, a, seed), &clean)).collect::<Result<Vec<_>, _>>()?;
    levels.sort_by(f64::total_cmp);
    println!("a = {a:e}, {} nodes", clean.nodes.len());
    println!("min {:.3}%  median {:.3}%  max {:.3}%", 100.0 * levels[0], 50.0 * (levels[49] + levels[50]), 100.0 * levels[99]);
    Ok(())
}
