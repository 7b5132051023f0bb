use std::io::Write as _;

use num_complex::Complex64;

use super::{write_eigenvalues, write_grid, ArtifactSink, ExperimentConfig};
use crate::dictionary::build_snapshots;
use crate::edmd::{export_binary, koopman};
use crate::error::Result;
use crate::numerics::eigenvalues;
use crate::plot::line_svg;
use crate::resolvent::{detect, GridKind, PseudospectrumGrid, ResolventEvaluator, ResolventMode};
use crate::systems::simulate_pendulum;

#[derive(Clone, Debug)]
pub struct GrowthEntry {
    pub size: usize,
    pub eigenvalues: Vec<Complex64>,
    pub grid: PseudospectrumGrid,
    /// `(threshold, detected count)`.
    pub counts: Vec<(f64, usize)>,
}

#[derive(Clone, Debug)]
pub struct PendulumSummary {
    pub dict_size: usize,
    pub eigenvalues: Vec<Complex64>,
    pub scans: Vec<PseudospectrumGrid>,
    /// `(radius, threshold, count)`.
    pub detections: Vec<(f64, f64, usize)>,
    pub growth: Vec<GrowthEntry>,
    /// Generator scan and the eigenvalues of the generator matrix.
    pub generator: Option<(PseudospectrumGrid, Vec<Complex64>)>,
}

pub(super) fn run(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<PendulumSummary> {
    let traj = sink.stage("simulate", |s| {
        let traj = simulate_pendulum(&cfg.pendulum, cfg.seed)?;
        s.write_with("trajectory.csv", |w| traj.write_csv(w))?;
        Ok(traj)
    })?;
    let snap = sink.stage("dictionary", |_| build_snapshots(&traj, &cfg.dictionary))?;
    let (k, eigs) = sink.stage("edmd", |s| {
        let k = koopman(&snap, cfg.koopman_route)?;
        let mut buf = Vec::new();
        export_binary(&mut buf, &k.k, snap.dt)?;
        s.write("koopman.bin", &buf)?;
        let eigs = eigenvalues(&k.k)?;
        write_eigenvalues(s, "eigenvalues.csv", &eigs)?;
        Ok((k, eigs))
    })?;
    let scans = sink.stage("scan", |s| {
        let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Koopman, cfg.koopman_route)?;
        let mut scans = Vec::new();
        for r in &cfg.grid.circle_radii {
            let grid = ev.scan_circle(*r, cfg.grid.circle_points)?;
            write_grid(s, &format!("scan_r{r}"), &grid, &format!("1/|R(z, K_N)| on |z| = {r}, N = {}", k.dict_size))?;
            scans.push(grid);
        }
        Ok(scans)
    })?;
    let detections = sink.stage("detect", |s| {
        let mut out = Vec::new();
        for (r, grid) in cfg.grid.circle_radii.iter().zip(&scans) {
            for t in &cfg.thresholds {
                let d = detect(grid, *t)?;
                s.write_with(&format!("detect_r{r}_t{t:e}.csv"), |w| d.write_csv(grid, w))?;
                out.push((*r, *t, d.count()));
            }
        }
        Ok(out)
    })?;
    let growth = sink.stage("growth", |s| {
        let radius = cfg.grid.circle_radii.first().copied().unwrap_or(1.01);
        let mut entries = Vec::new();
        for &size in &cfg.dictionary_sizes {
            let mut spec = cfg.dictionary.clone();
            spec.size = Some(size);
            let snap = build_snapshots(&traj, &spec)?;
            let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Koopman, cfg.koopman_route)?;
            let grid = ev.scan_circle(radius, cfg.grid.circle_points)?;
            write_grid(s, &format!("growth_n{size}"), &grid, &format!("1/|R(z, K_N)| on |z| = {radius}, N = {size}"))?;
            let counts = cfg
                .thresholds
                .iter()
                .map(|t| detect(&grid, *t).map(|d| (*t, d.count())))
                .collect::<Result<Vec<_>>>()?;
            entries.push(GrowthEntry {
                size,
                eigenvalues: eigenvalues(ev.operator())?,
                grid,
                counts,
            });
        }
        if !entries.is_empty() {
            s.write_with("growth.csv", |w| {
                writeln!(w, "size,threshold,count,median_inv_norm")?;
                for e in &entries {
                    for (t, c) in &e.counts {
                        writeln!(w, "{},{t:e},{c},{:e}", e.size, e.grid.median())?;
                    }
                }
                Ok(())
            })?;
        }
        Ok(entries)
    })?;
    let generator = match &cfg.grid.generator_lines {
        None => None,
        Some(lines) => Some(sink.stage("generator", |s| {
            let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Generator, cfg.koopman_route)?;
            let ys: Vec<f64> = (0..lines.points)
                .map(|i| lines.im_range[0] + (lines.im_range[1] - lines.im_range[0]) * i as f64 / (lines.points - 1) as f64)
                .collect();
            let points: Vec<Complex64> = lines
                .real_parts
                .iter()
                .flat_map(|x| ys.iter().map(move |y| Complex64::new(*x, *y)))
                .collect();
            let inv_norms = ev.scan_points(&points);
            let grid = PseudospectrumGrid {
                points,
                inv_norms,
                kind: GridKind::Points,
            };
            s.write_with("generator_scan.csv", |w| grid.write_csv(w))?;
            let series: Vec<(String, Vec<f64>)> = lines
                .real_parts
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let vals = grid.inv_norms[j * ys.len()..(j + 1) * ys.len()]
                        .iter()
                        .map(|v| v.max(f64::MIN_POSITIVE).log10())
                        .collect();
                    (format!("x = {x}"), vals)
                })
                .collect();
            let named: Vec<(&str, Vec<f64>)> = series.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
            s.write("generator_scan.svg", line_svg("log10 1/|R(x + iy, A_N)| against y", &ys, &named).as_bytes())?;
            Ok((grid, eigenvalues(ev.operator())?))
        })?),
    };
    Ok(PendulumSummary {
        dict_size: k.dict_size,
        eigenvalues: eigs,
        scans,
        detections,
        growth,
        generator,
    })
}
