//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false` so the lines always reach the terminal.
//! Exits nonzero when a criterion fails that is not listed in
//! `KNOWN_FAILURES`; known failures still print as FAIL.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resolvent_dmd::dictionary::{gauss_hermite_rule, grams, SnapshotMatrices};
use resolvent_dmd::edmd::KoopmanRoute;
use resolvent_dmd::experiment::{self, ExperimentConfig, NestedPair, RunOutcome, RunSummary};
use resolvent_dmd::numerics::{eigenvalues, ComplexMatrix};
use resolvent_dmd::resolvent::{detect, PseudospectrumGrid, ResolventEvaluator, ResolventMode};
use resolvent_dmd::spectral::{contour_projection, resdmd_residual, Contour};

/// Criteria that fail on this implementation, with the reason.
const KNOWN_FAILURES: &[(usize, &str)] = &[(
    10,
    "pseudoeigenfunctions near the second eigenvalue mix both modes, so the joint least-squares fit spreads mode content across clusters",
)];

type Matrix = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn to_rows(m: &ComplexMatrix) -> Matrix {
    (0..m.rows()).map(|i| m.row(i)).collect()
}

fn mul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn adjoint(a: &Matrix) -> Matrix {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j].conj()).collect()).collect()
}

/// Gauss–Jordan inverse with partial pivoting.
fn inverse(a: &Matrix) -> Matrix {
    let n = a.len();
    let mut aug: Matrix = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }));
            row
        })
        .collect();
    for col in 0..n {
        let p = (col..n).max_by(|x, y| aug[*x][col].norm().total_cmp(&aug[*y][col].norm())).unwrap();
        aug.swap(col, p);
        let d = aug[col][col];
        aug[col].iter_mut().for_each(|x| *x /= d);
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != c(0.0, 0.0) {
                    let pivot = aug[col].clone();
                    aug[r].iter_mut().zip(&pivot).for_each(|(x, p)| *x -= f * p);
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn fro(a: &Matrix) -> f64 {
    a.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn fro_diff(a: &ComplexMatrix, b: &Matrix) -> f64 {
    to_rows(a)
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn random_snapshots(seed: u64) -> SnapshotMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = ComplexMatrix::from_fn(40, 12, |_, _| rand_c(&mut rng));
    let y = ComplexMatrix::from_fn(40, 12, |_, _| rand_c(&mut rng));
    SnapshotMatrices::new(x, y, vec![1.0 / 40.0; 40], 1.0).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn smw_equivalence() -> Outcome {
    let t0 = Instant::now();
    let snap = random_snapshots(11);
    let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Koopman, KoopmanRoute::PseudoinverseRoute).unwrap();
    // Normal-equations K for full column rank data, then a direct inverse.
    let x = to_rows(&snap.psi_x);
    let y = to_rows(&snap.psi_y);
    let xh = adjoint(&x);
    let k = mul(&inverse(&mul(&xh, &x)), &mul(&xh, &y));
    let mut worst: f64 = 0.0;
    for j in 0..20 {
        let z = Complex64::from_polar(1.5, 2.0 * PI * j as f64 / 20.0);
        let shifted: Matrix = (0..12)
            .map(|r| (0..12).map(|s| if r == s { z - k[r][s] } else { -k[r][s] }).collect())
            .collect();
        let oracle = inverse(&shifted);
        let got = ev.smw_resolvent(z).unwrap();
        worst = worst.max(fro_diff(&got, &oracle) / fro(&oracle));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 1.0,
        format!("max relative gap {worst:.2e} (tol 1e-10), {secs:.3} s (limit 1 s)"),
    )
}

fn resolvent_identity() -> Outcome {
    let t0 = Instant::now();
    let snap = random_snapshots(12);
    let ev = ResolventEvaluator::from_snapshots(&snap, ResolventMode::Koopman, KoopmanRoute::GramRoute).unwrap();
    let eigs = eigenvalues(ev.operator()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut draw = || loop {
        let z = rand_c(&mut rng) * 3.0;
        if eigs.iter().all(|l| (z - l).norm() > 0.05) {
            return z;
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (z, w) = (draw(), draw());
        let rz = to_rows(&ev.smw_resolvent(z).unwrap());
        let rw = to_rows(&ev.smw_resolvent(w).unwrap());
        let prod = mul(&rz, &rw);
        let mut res: f64 = 0.0;
        for i in 0..12 {
            for j in 0..12 {
                res += (rz[i][j] - rw[i][j] - (w - z) * prod[i][j]).norm_sqr();
            }
        }
        let scale = fro(&rz) + fro(&rw) + (w - z).norm() * fro(&prod);
        worst = worst.max(res.sqrt() / scale);
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 1.0,
        format!("max scaled residual {worst:.2e} over 50 pairs (tol 1e-9), {secs:.3} s (limit 1 s)"),
    )
}

/// Largest violation of `1/‖R(z)‖ ≤ min_i |z − λ_i|` over a grid.
fn bound_violation(grid: &PseudospectrumGrid, eigs: &[Complex64]) -> f64 {
    grid.points
        .iter()
        .zip(&grid.inv_norms)
        .map(|(z, v)| {
            let d = eigs.iter().map(|l| (z - l).norm()).fold(f64::INFINITY, f64::min);
            v - d
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn sigma_min_bound(runs: &[(&str, &RunOutcome)]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut points = 0;
    let mut check = |grid: &PseudospectrumGrid, eigs: &[Complex64]| {
        worst = worst.max(bound_violation(grid, eigs));
        points += grid.len();
    };
    for (_, run) in runs {
        match &run.summary {
            RunSummary::Pendulum(s) => {
                s.scans.iter().for_each(|g| check(g, &s.eigenvalues));
                s.growth.iter().for_each(|g| check(&g.grid, &g.eigenvalues));
                if let Some((g, e)) = &s.generator {
                    check(g, e);
                }
            }
            RunSummary::Lorenz(s) => check(&s.scan, &s.eigenvalues),
            RunSummary::Oscillators(s) => check(&s.scan, &s.eigenvalues),
            RunSummary::Synthetic(_) => {}
        }
    }
    // Normal operator built from a Householder reflection.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 12;
    let u: Vec<Complex64> = (0..n).map(|_| rand_c(&mut rng)).collect();
    let un: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    let lambdas: Vec<Complex64> = (0..n).map(|_| rand_c(&mut rng)).collect();
    let q = ComplexMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        c(delta, 0.0) - u[i] * u[j].conj() * (2.0 / un)
    });
    let k = q.matmul(&ComplexMatrix::from_diag(&lambdas)).matmul(&q.adjoint());
    let ev = ResolventEvaluator::from_operator(&k, ResolventMode::Koopman).unwrap();
    let mut eq: f64 = 0.0;
    for _ in 0..50 {
        let z = rand_c(&mut rng) * 1.5;
        let d = lambdas.iter().map(|l| (z - l).norm()).fold(f64::INFINITY, f64::min);
        eq = eq.max((ev.inv_resolvent_norm(z) - d).abs());
    }
    let names: Vec<&str> = runs.iter().map(|(n, _)| *n).collect();
    outcome(
        worst <= 1e-12 && eq <= 1e-10,
        format!(
            "max(1/|R| - dist) = {worst:.2e} over {points} points of {} (tol 1e-12); normal K equality gap {eq:.2e} (tol 1e-10)",
            names.join(", ")
        ),
    )
}

fn pendulum_trend(run: &RunOutcome, secs: f64) -> Outcome {
    let RunSummary::Pendulum(s) = &run.summary else { unreachable!() };
    let m: Vec<f64> = s.scans.iter().map(|g| g.median()).collect();
    let pass = m.len() == 3 && 2.0 * m[0] <= m[1] && 2.0 * m[1] <= m[2] && secs < 300.0;
    outcome(
        pass,
        format!(
            "medians {:.3e} < {:.3e} < {:.3e}, ratios {:.2} and {:.2} (need >= 2), N = {}, run {secs:.1} s (limit 300 s)",
            m[0],
            m[1],
            m[2],
            m[1] / m[0],
            m[2] / m[1],
            s.dict_size
        ),
    )
}

fn growth_trend(run: &RunOutcome) -> Outcome {
    let RunSummary::Pendulum(s) = &run.summary else { unreachable!() };
    let counts: Vec<(usize, usize)> = s
        .growth
        .iter()
        .map(|g| (g.size, detect(&g.grid, 1e-8).unwrap().count()))
        .collect();
    let sizes: Vec<usize> = counts.iter().map(|(n, _)| *n).collect();
    let ok = sizes == [441, 600, 806] && counts.windows(2).all(|w| w[1].1 as f64 >= 0.95 * w[0].1 as f64);
    let minima: Vec<String> = s.growth.iter().map(|g| format!("{:.2e}", g.grid.min())).collect();
    let note = if counts.iter().all(|(_, c)| *c == 0) {
        " (no point falls below 1e-8, so the trend is trivially non-decreasing)"
    } else {
        ""
    };
    outcome(
        ok,
        format!(
            "counts at 1e-8 on |z| = 1.01: {:?}; grid minima {}{note}",
            counts,
            minima.join(", ")
        ),
    )
}

fn generator_minima(run: &RunOutcome) -> Outcome {
    let RunSummary::Pendulum(s) = &run.summary else { unreachable!() };
    let Some((grid, _)) = &s.generator else {
        return outcome(false, "no generator scan configured");
    };
    let mut lines: Vec<(f64, f64, f64)> = Vec::new();
    for (z, v) in grid.points.iter().zip(&grid.inv_norms) {
        match lines.iter_mut().find(|(x, _, _)| *x == z.re) {
            Some(l) if *v < l.2 => *l = (z.re, z.im, *v),
            Some(_) => {}
            None => lines.push((z.re, z.im, *v)),
        }
    }
    let pass = lines.len() == 2 && lines.iter().all(|(_, y, _)| y.abs() < 0.5);
    let desc: Vec<String> = lines.iter().map(|(x, y, v)| format!("x = {x}: argmin y = {y:.3} ({v:.2e})")).collect();
    outcome(pass, format!("{} (need |y| < 0.5)", desc.join("; ")))
}

fn projection_multiplicity() -> Outcome {
    let diag = ComplexMatrix::from_real_diag(&[0.9, 0.5]);
    let jordan = ComplexMatrix::from_real_row_major(2, 2, &[0.8, 1.0, 0.0, 0.8]).unwrap();
    let cases = [
        (diag, Contour::circle(c(0.9, 0.0), 0.2), 1, vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]),
        (jordan, Contour::circle(c(0.8, 0.0), 0.2), 2, vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, cont, expected, exact) in cases {
        let ev = ResolventEvaluator::from_operator(&k, ResolventMode::Koopman).unwrap();
        let p = contour_projection(&ev, &cont.with_points(64)).unwrap();
        let dev = (p.trace_value.re - expected as f64).abs() + p.trace_value.im.abs();
        let gap = fro_diff(&p.p, &exact);
        pass &= p.multiplicity == expected && dev <= 1e-8;
        parts.push(format!("multiplicity {} (expected {expected}), trace deviation {dev:.1e}, |P - P_exact| {gap:.1e}", p.multiplicity));
    }
    outcome(pass, parts.join("; "))
}

fn error_bound() -> Outcome {
    let report = experiment::run_bounds(0, &[]).unwrap();
    let pair = NestedPair::new(0).unwrap();
    let lam = pair.eigenvalues[0];
    let gap = pair.eigenvalues[1..].iter().map(|l| (l - lam).norm()).fold(f64::INFINITY, f64::min);
    let b = &report.bounds[0];
    let trace_gap = c(report.trace_lhs[0] - report.trace_rhs[0], report.trace_lhs[1] - report.trace_rhs[1]).norm();
    let pass = gap >= 0.2 && b.eta > 0.0 && b.error <= 10.0 * b.eta && trace_gap <= 1e-8;
    outcome(
        pass,
        format!(
            "30 -> 20 truncation, gap {gap:.3}: eta {:.3e}, |lambda_ref - mean| {:.3e} (ratio {:.3}, need <= 10); trace identity gap {trace_gap:.1e}",
            b.eta,
            b.error,
            b.error / b.eta
        ),
    )
}

fn resdmd_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let lam = Complex64::from_polar(0.7, PI / 5.0);
    let x = ComplexMatrix::from_fn(30, 6, |_, _| rand_c(&mut rng));
    let y = x.scale(lam);
    let snap = SnapshotMatrices::new(x, y, vec![1.0 / 30.0; 30], 1.0).unwrap();
    let gr = grams(&snap);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let v: Vec<Complex64> = (0..6).map(|_| rand_c(&mut rng)).collect();
        for _ in 0..10 {
            let z = rand_c(&mut rng) * 1.5;
            worst = worst.max((resdmd_residual(&gr, z, &v).unwrap() - (z - lam).norm()).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max |r - |z - lambda|| = {worst:.2e} over 100 pairs (tol 1e-10)"))
}

fn oscillator_clustering(noisy: &RunOutcome) -> Outcome {
    let t0 = Instant::now();
    let mut cfg = ExperimentConfig::preset("oscillators-desk").unwrap();
    cfg.oscillators.sigma1 = 0.0;
    cfg.oscillators.sigma2 = 0.0;
    cfg.oscillators.meas_noise_std = 0.0;
    cfg.oscillators.t_end = 80.0;
    cfg.dictionary.delay_width = 200;
    cfg.cluster.clusters = 3;
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let run = experiment::run(&cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let RunSummary::Oscillators(s) = &run.summary else { unreachable!() };
    let out = &s.resolvent;
    let peaks_ok = out.matches.iter().all(|m| m.phase_error <= 0.05);
    let rmse_ok = out.matches.iter().all(|m| m.rel_rmse < 0.3);
    // Best component per mode over all clusters, for diagnosis only.
    let truth_run = resolvent_dmd::systems::simulate_oscillators(&cfg.oscillators, cfg.seed).unwrap();
    let best: Vec<f64> = (0..2)
        .map(|i| {
            let truth = &truth_run.mode(i)[..s.rows];
            out.reconstruction
                .components
                .iter()
                .map(|comp| rel_rmse(comp, truth))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let RunSummary::Oscillators(ns) = &noisy.summary else { unreachable!() };
    let e_res = ns.resolvent.clusters.mean_entropy();
    let e_base = ns.resdmd.as_ref().map(|o| o.clusters.mean_entropy()).unwrap_or(f64::NAN);
    let m: Vec<String> = out
        .matches
        .iter()
        .map(|m| {
            format!(
                "mode {}: peak {:.4} vs {:.4} ({:.1}%), rmse {:.3}",
                m.mode,
                m.peak_angle,
                m.true_phase,
                100.0 * m.phase_error,
                m.rel_rmse
            )
        })
        .collect();
    outcome(
        peaks_ok && rmse_ok && e_res <= e_base && secs < 600.0,
        format!(
            "{}; best rmse over clusters {:.3}/{:.3} (need < 0.3); noisy entropy {:.4} vs ResDMD {:.4}; {secs:.1} s",
            m.join("; "),
            best[0],
            best[1],
            e_res,
            e_base
        ),
    )
}

fn rel_rmse(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// `∫ x^k e^{−x²} dx = Γ((k+1)/2)` for even `k`, zero for odd.
fn moment(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut g = PI.sqrt();
    let mut a = 0.5;
    for _ in 0..k / 2 {
        g *= a;
        a += 1.0;
    }
    g
}

fn quadrature_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=20 {
        let (x, w) = gauss_hermite_rule(n).unwrap();
        for k in 0..2 * n {
            let terms: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).collect();
            let sum: f64 = terms.iter().sum();
            let scale = if k % 2 == 0 { moment(k) } else { terms.iter().map(|t| t.abs()).sum() };
            worst = worst.max((sum - moment(k)).abs() / scale);
        }
    }
    outcome(worst <= 1e-12, format!("max relative moment error {worst:.2e} for n = 1..20 (tol 1e-12)"))
}

fn run_preset(name: &str) -> (RunOutcome, f64) {
    let mut cfg = ExperimentConfig::preset(name).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let t0 = Instant::now();
    let out = experiment::run(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    (out, t0.elapsed().as_secs_f64())
}

fn main() {
    let presets = ["pendulum-desk", "lorenz-desk", "oscillators-desk"];
    let mut first = Vec::new();
    let mut same = Vec::new();
    let mut secs = Vec::new();
    for name in presets {
        let (a, t) = run_preset(name);
        let (b, _) = run_preset(name);
        same.push((name, a.manifest.digests() == b.manifest.digests(), a.manifest.artifacts.len()));
        first.push(a);
        secs.push(t);
    }
    let runs: Vec<(&str, &RunOutcome)> = presets.iter().copied().zip(first.iter()).collect();

    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "SMW and direct resolvent agree", smw_equivalence()),
        (2, "first resolvent identity", resolvent_identity()),
        (3, "sigma_min bounded by eigenvalue distance", sigma_min_bound(&runs)),
        (4, "pendulum medians approach the unit circle", pendulum_trend(&first[0], secs[0])),
        (5, "detections non-decreasing with dictionary size", growth_trend(&first[0])),
        (6, "generator minima near the imaginary axis", generator_minima(&first[0])),
        (7, "contour projection multiplicities", projection_multiplicity()),
        (8, "eigenvalue error bounded by the residual", error_bound()),
        (9, "ResDMD residual closed form", resdmd_closed_form()),
        (10, "oscillator clustering peaks and reconstruction", oscillator_clustering(&first[2])),
        (11, "Gauss-Hermite exactness", quadrature_exactness()),
        (
            12,
            "deterministic artifact digests",
            outcome(
                same.iter().all(|(_, ok, _)| *ok),
                same.iter()
                    .map(|(n, ok, k)| format!("{n}: {} ({k} artifacts)", if *ok { "identical" } else { "DIFFERENT" }))
                    .collect::<Vec<_>>()
                    .join("; "),
            ),
        ),
    ];

    let mut unexpected = Vec::new();
    for (id, title, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2}. {title}: {}", o.detail);
        let known = KNOWN_FAILURES.iter().find(|(k, _)| k == id);
        match (o.pass, known) {
            (false, None) => unexpected.push(*id),
            (false, Some((_, why))) => println!("       known failure: {why}"),
            (true, Some(_)) => println!("       listed as a known failure but now passes"),
            (true, None) => {}
        }
    }
    let passed = results.iter().filter(|(_, _, o)| o.pass).count();
    println!("{passed}/{} criteria pass", results.len());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
