use num_complex::Complex64;

use super::{write_eigenvalues, write_grid, ArtifactSink, ExperimentConfig};
use crate::dictionary::{generator_grams, grams, quadrature_snapshots, BasisSpec};
use crate::error::Result;
use crate::numerics::eigenvalues;
use crate::resolvent::{PseudospectrumGrid, ResolventEvaluator, ResolventMode};
use crate::spectral::ResDmdScanner;
use crate::systems::{simulate_lorenz, Trajectory};

#[derive(Clone, Debug)]
pub struct LorenzSummary {
    pub dict_size: usize,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub mode: ResolventMode,
    pub eigenvalues: Vec<Complex64>,
    pub scan: PseudospectrumGrid,
    /// ResDMD minimal residuals on the same grid.
    pub resdmd: PseudospectrumGrid,
    pub resdmd_cholesky: bool,
}

/// Per-axis mean and standard deviation of a trajectory.
pub fn affine_scaling(traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    (0..traj.dim())
        .map(|d| {
            let c = traj.component(d);
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt().max(f64::MIN_POSITIVE))
        })
        .unzip()
}

pub(super) fn run(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<LorenzSummary> {
    let lz = &cfg.lorenz;
    let traj = sink.stage("simulate", |s| {
        let traj = simulate_lorenz(lz, &lz.initial_state, cfg.seed)?;
        s.write_with("trajectory.csv", |w| traj.write_csv(w))?;
        Ok(traj)
    })?;
    let (spec, snap) = sink.stage("dictionary", |_| {
        let mut spec: BasisSpec = cfg.dictionary.clone();
        if spec.center.is_empty() || spec.scale.is_empty() {
            let (c, s) = affine_scaling(&traj);
            spec.center = c;
            spec.scale = s;
        }
        let snap = quadrature_snapshots(&spec, cfg.quadrature_order, lz.dt, |x| lz.flow([x[0], x[1], x[2]]).to_vec())?;
        Ok((spec, snap))
    })?;
    let mode = cfg.resolvent_mode;
    let (ev, eigs) = sink.stage("edmd", |s| {
        let ev = ResolventEvaluator::from_snapshots(&snap, mode, cfg.koopman_route)?;
        let eigs = eigenvalues(ev.operator())?;
        write_eigenvalues(s, "eigenvalues.csv", &eigs)?;
        Ok((ev, eigs))
    })?;
    let rect = cfg.grid.rectangle.as_ref().expect("validated");
    let label = match mode {
        ResolventMode::Koopman => "K_N",
        ResolventMode::Generator => "A_N",
    };
    let scan = sink.stage("scan", |s| {
        let grid = ev.scan_rectangle(rect.re, rect.im, rect.nx, rect.ny)?;
        write_grid(s, "scan_rectangle", &grid, &format!("1/|R(z, {label})|, N = {}", snap.dict_size()))?;
        Ok(grid)
    })?;
    let (resdmd, cholesky) = sink.stage("resdmd", |s| {
        let gr = match mode {
            ResolventMode::Koopman => grams(&snap),
            ResolventMode::Generator => generator_grams(&snap),
        };
        let scanner = ResDmdScanner::new(&gr)?;
        let grid = PseudospectrumGrid {
            inv_norms: scanner.scan(&scan.points)?,
            points: scan.points.clone(),
            kind: scan.kind.clone(),
        };
        write_grid(s, "resdmd_rectangle", &grid, &format!("ResDMD minimal residual ({label}), N = {}", snap.dict_size()))?;
        Ok((grid, scanner.uses_cholesky()))
    })?;
    Ok(LorenzSummary {
        dict_size: snap.dict_size(),
        center: spec.center,
        scale: spec.scale,
        mode,
        eigenvalues: eigs,
        scan,
        resdmd,
        resdmd_cholesky: cholesky,
    })
}
