//! Contour projections, multiplicity counting and the residual bound for a
//! nested truncation.

use resolvent_dmd::experiment::{run_bounds, NestedPair};
use resolvent_dmd::numerics::ComplexMatrix;
use resolvent_dmd::resolvent::{ResolventEvaluator, ResolventMode};
use resolvent_dmd::spectral::{contour_projection, enclosed_mean, Contour};
use resolvent_dmd::Complex64;

fn main() -> resolvent_dmd::Result<()> {
    let jordan = ComplexMatrix::from_real_row_major(3, 3, &[0.8, 1.0, 0.0, 0.0, 0.8, 0.0, 0.0, 0.0, -0.3])?;
    let ev = ResolventEvaluator::from_operator(&jordan, ResolventMode::Koopman)?;
    for (center, radius) in [(0.8, 0.2), (-0.3, 0.2), (0.25, 0.8)] {
        let c = Contour::circle(Complex64::new(center, 0.0), radius);
        let p = contour_projection(&ev, &c)?;
        let mean = enclosed_mean(&ev, &c)?.mean;
        println!("circle at {center} r {radius}: trace {:.3e}, multiplicity {}, mean {mean:?}", p.trace_value, p.multiplicity);
    }

    let pair = NestedPair::new(0)?;
    let report = run_bounds(0, &[])?;
    let b = &report.bounds[0];
    println!(
        "{} -> {} truncation around {}: eta = {:.3e}, error = {:.3e}",
        pair.reference.dict_size, pair.truncated.dict_size, pair.eigenvalues[0], b.eta, b.error
    );
    println!("trace identity: {:?} vs {:?}", report.trace_lhs, report.trace_rhs);
    Ok(())
}
