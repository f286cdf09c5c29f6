//! One forward solve for a horizontal fault with constant slip, printing the
//! displacement along the top side.
//!
//! cargo run --example forward_trace

use faultscope::problem::Model;
use faultscope::synthetic::{make_measurement, Acquisition};
use faultscope::{FaultSegment, Point2, SlipField};

fn main() -> faultscope::Result<()> {
    let model = Model::new(0.05);
    let fault = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::constant());
    let mesh = model.build_mesh(&fault)?;
    println!(
        "{} triangles, {} coarse, min angle {:.1} deg",
        mesh.fine.n_triangles(),
        mesh.coarse.n_triangles(),
        mesh.fine.min_angle_deg()
    );
    let trace = make_measurement(&model, &fault, Acquisition::TopOnly)?;
    println!("{:>8} {:>12} {:>12}", "x", "ux", "uy");
    for (p, u) in trace.nodes.iter().zip(&trace.values) {
        println!("{:8.3} {:12.5e} {:12.5e}", p.x, u.x, u.y);
    }
    Ok(())
}
