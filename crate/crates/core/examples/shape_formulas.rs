//! Distributed and boundary shape derivatives along each vertex direction
//! under mesh refinement, for a slip that vanishes at the tips.
//!
//! cargo run --example shape_formulas

use faultscope::problem::Model;
use faultscope::shape::{boundary_shape_derivative, distributed_shape_derivative, residual, DeformationField, ShapeFormula};
use faultscope::synthetic::{make_measurement, Acquisition};
use faultscope::{FaultSegment, Point2, SlipField, Vec2};

fn main() -> faultscope::Result<()> {
    let truth = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::compact());
    let data = make_measurement(&Model::new(0.02), &truth, Acquisition::AllExposed)?;
    let at = truth.with_vertices(Point2::new(-0.35, 0.1), Point2::new(0.43, 0.12));
    println!("{:>6} {:>4} {:>14} {:>14} {:>14}", "h", "dir", "discrete", "continuous", "boundary");
    for h in [0.1, 0.05, 0.025] {
        let model = Model::new(h);
        let solver = model.solver(model.build_mesh(&at)?)?;
        let disc = &solver.disc;
        let layout = disc.layout(data.acquisition.edges());
        let u = solver.forward(&data.slip)?;
        let w = solver.adjoint(&layout, &residual(&layout, &disc.trace(&u, &layout), &data)?)?;
        for (name, l, dir) in [("x0", 0, Vec2::new(1.0, 0.0)), ("y0", 0, Vec2::new(0.0, 1.0)), ("x1", 1, Vec2::new(1.0, 0.0)), ("y1", 1, Vec2::new(0.0, 1.0))] {
            let field = DeformationField::fault_vertex(&disc.mesh, l, dir);
            let d = distributed_shape_derivative(disc, &u, &w, &data.slip, &field, None, ShapeFormula::Discrete);
            let c = distributed_shape_derivative(disc, &u, &w, &data.slip, &field, None, ShapeFormula::Continuous);
            let b = boundary_shape_derivative(disc, &w, &data.slip, &field, None)?;
            println!("{h:6.3} {name:>4} {d:14.6e} {c:14.6e} {b:14.6e}");
        }
    }
    Ok(())
}
