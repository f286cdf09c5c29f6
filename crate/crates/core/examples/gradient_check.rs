//! Vertex shape derivatives against central differences of the misfit, for
//! the discrete, continuous and boundary forms.
//!
//! cargo run --example gradient_check

use faultscope::config::GradcheckFormula;
use faultscope::gradcheck::{gradcheck, write_csv, GradcheckOptions};
use faultscope::problem::Model;
use faultscope::synthetic::{make_measurement, Acquisition};
use faultscope::{FaultSegment, Point2, SlipField};

fn main() -> faultscope::Result<()> {
    let model = Model::new(0.1);
    let truth = FaultSegment::new(Point2::new(-0.4, 0.0), Point2::new(0.4, 0.0), SlipField::compact());
    let data = make_measurement(&model.with_h(0.05), &truth, Acquisition::AllExposed)?;
    let at = truth.with_vertices(Point2::new(-0.35, 0.1), Point2::new(0.43, 0.12));
    let formulas = [GradcheckFormula::Discrete, GradcheckFormula::Continuous, GradcheckFormula::Boundary];
    let rows = gradcheck(&model, &at, &[data], &formulas, &GradcheckOptions::default())?;
    write_csv(&rows, &mut std::io::stdout()).expect("stdout");
    Ok(())
}
