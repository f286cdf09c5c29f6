//! Synthetic measurements on the exposed sides, with seeded multiplicative
//! noise, written as CSV plus JSON sidecar.
//!
//! cargo run --example noisy_measurements -- /tmp/measurement.csv

use faultscope::problem::Model;
use faultscope::synthetic::{add_noise, make_measurement, sidecar_path, Acquisition};
use faultscope::{FaultSegment, Point2, SlipField};

fn main() -> faultscope::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "measurement.csv".into());
    let model = Model::new(0.05);
    let fault = FaultSegment::new(Point2::new(-0.4, -0.15), Point2::new(0.4, 0.0), SlipField::compact());
    let clean = make_measurement(&model, &fault, Acquisition::AllExposed)?;
    let noisy = add_noise(&clean, 7e-4, 1);
    println!("{} nodes, realized noise level {:.3}%", noisy.nodes.len(), 100.0 * noisy.meta.noise_level);
    let csv = std::path::PathBuf::from(out);
    std::fs::write(&csv, noisy.to_csv()).map_err(|e| faultscope::Error::io(&csv, e))?;
    let side = sidecar_path(&csv);
    let json = serde_json::to_string_pretty(&noisy.sidecar()).unwrap();
    std::fs::write(&side, json).map_err(|e| faultscope::Error::io(&side, e))?;
    println!("wrote {} and {}", csv.display(), side.display());
    Ok(())
}
