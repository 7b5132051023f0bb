//! Koopman matrix of a linear map from snapshot pairs, its eigenvalues and
//! the resolvent norm on a circle.

use resolvent_dmd::dictionary::SnapshotMatrices;
use resolvent_dmd::edmd::{koopman, KoopmanRoute};
use resolvent_dmd::numerics::{eigenvalues, ComplexMatrix};
use resolvent_dmd::resolvent::{ResolventEvaluator, ResolventMode};
use resolvent_dmd::systems::simulate_linear;

fn main() -> resolvent_dmd::Result<()> {
    // A damped rotation: eigenvalues 0.9·e^{±0.3i}.
    let (r, th) = (0.9_f64, 0.3_f64);
    let b = vec![vec![r * th.cos(), -r * th.sin()], vec![r * th.sin(), r * th.cos()]];
    let traj = simulate_linear(&b, &[1.0, 0.0], 60, 1.0)?;

    let m = traj.len() - 1;
    let x = ComplexMatrix::from_real_fn(m, 2, |i, j| traj.states[i][j]);
    let y = ComplexMatrix::from_real_fn(m, 2, |i, j| traj.states[i + 1][j]);
    let snap = SnapshotMatrices::new(x, y, vec![1.0 / m as f64; m], 1.0)?;

    for route in [KoopmanRoute::PseudoinverseRoute, KoopmanRoute::GramRoute] {
        let k = koopman(&snap, route)?;
        let mut eigs = eigenvalues(&k.k)?;
        eigs.sort_by(|a, b| a.im.total_cmp(&b.im));
        println!("{route:?}:");
        for l in eigs {
            println!("  |lambda| = {:.6}, arg = {:+.6}", l.norm(), l.arg());
        }
    }

    let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Koopman, KoopmanRoute::GramRoute)?;
    for radius in [0.95, 1.2, 2.0] {
        let grid = ev.scan_circle(radius, 64)?;
        println!("|z| = {radius}: min 1/|R| = {:.4e}", grid.min());
    }
    Ok(())
}
