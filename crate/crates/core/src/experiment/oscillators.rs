use num_complex::Complex64;
use serde::Serialize;

use super::{write_eigenvalues, write_grid, ArtifactSink, ClusterParams, ExperimentConfig};
use crate::clustering::{
    cluster_measures, fuzzy_cmeans, reconstruct, similarity, spectral_embed, write_measures_csv, ClusterReport,
    Embedding, FuzzyClusters, PseudoeigenFamily, Reconstruction, SimilarityMatrix, SpectralMeasure,
};
use crate::dictionary::{grams, BasisKind, time_delay_embed, SnapshotMatrices};
use crate::edmd::KoopmanRoute;
use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, vec_norm};
use crate::plot::line_svg;
use crate::resolvent::{
    circle_points, fix_phase, GridKind, Pseudoeigenfunction, PseudospectrumGrid, ResolventEvaluator, ResolventMode,
};
use crate::spectral::ResDmdScanner;
use crate::systems::simulate_oscillators;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// Right singular vectors of `zI − K` for the smallest singular value.
    Resolvent,
    /// Minimizers of the ResDMD residual.
    ResDmd,
}

impl PipelineKind {
    fn prefix(self) -> &'static str {
        match self {
            PipelineKind::Resolvent => "",
            PipelineKind::ResDmd => "resdmd_",
        }
    }
}

/// A true mode paired with the cluster whose measure peaks nearest its phase.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeMatch {
    pub mode: usize,
    pub cluster: usize,
    pub true_phase: f64,
    pub peak_angle: f64,
    /// `|peak − phase| / phase`.
    pub phase_error: f64,
    /// `‖component − mode‖ / ‖mode‖` over the fitted rows.
    pub rel_rmse: f64,
}

#[derive(Clone, Debug)]
pub struct ClusterOutcome {
    pub kind: PipelineKind,
    pub family: PseudoeigenFamily,
    pub similarity: SimilarityMatrix,
    pub embedding: Embedding,
    pub clusters: FuzzyClusters,
    pub measures: Vec<SpectralMeasure>,
    pub reconstruction: Reconstruction,
    pub matches: Vec<ModeMatch>,
}

impl ClusterOutcome {
    pub fn peak_angles(&self) -> Vec<f64> {
        self.measures.iter().map(SpectralMeasure::peak_angle).collect()
    }

    pub fn report(&self) -> ClusterReport {
        let mut warnings = self.clusters.warnings.clone();
        if self.reconstruction.ridge {
            warnings.push("reconstruction design is rank deficient; ridge regularization applied".into());
        }
        if let Some(t) = self.measures.iter().filter_map(|m| m.truncated_at).min() {
            warnings.push(format!("moment sums truncated at j = {t}"));
        }
        ClusterReport {
            z: self.family.members.iter().map(|m| [m.z.re, m.z.im]).collect(),
            memberships: self.clusters.membership.clone(),
            labels: self.clusters.labels.clone(),
            embedding: self.embedding.coords.clone(),
            mean_entropy: self.clusters.mean_entropy(),
            peak_angles: self.peak_angles(),
            warnings,
            measure_kind: "poisson-smoothed moment surrogate".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OscillatorSummary {
    pub dict_size: usize,
    pub rows: usize,
    /// Per-sample phases of the two modes.
    pub phases: [f64; 2],
    pub eigenvalues: Vec<Complex64>,
    /// `1/amplification` of the resolvent family on its circle.
    pub scan: PseudospectrumGrid,
    pub resolvent: ClusterOutcome,
    pub resdmd: Option<ClusterOutcome>,
}

fn resolvent_family(ev: &ResolventEvaluator, points: &[Complex64]) -> Result<Vec<Pseudoeigenfunction>> {
    use rayon::prelude::*;
    points.par_iter().map(|z| ev.pseudoeigenfunction(*z)).collect()
}

fn resdmd_family(scanner: &ResDmdScanner, points: &[Complex64]) -> Result<Vec<Pseudoeigenfunction>> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|&z| {
            let (r, mut v) = scanner.minimize(z)?;
            let n = vec_norm(&v);
            if n == 0.0 {
                return Err(Error::Degenerate(format!("ResDMD minimizer at z = {z}")));
            }
            v.iter_mut().for_each(|x| *x /= n);
            fix_phase(&mut v);
            Ok(Pseudoeigenfunction {
                z,
                coeffs: v,
                amplification: if r > 0.0 { 1.0 / r } else { f64::INFINITY },
            })
        })
        .collect()
}

/// Assigns each true mode to a distinct cluster, minimizing the summed
/// distance between cluster peaks and true phases.
fn match_modes(peaks: &[f64], phases: &[f64]) -> Vec<usize> {
    fn search(peaks: &[f64], phases: &[f64], used: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        let i = used.len();
        if i == phases.len() {
            let cost: f64 = used.iter().zip(phases).map(|(c, p)| (peaks[*c] - p).abs()).sum();
            if cost < best.0 {
                *best = (cost, used.clone());
            }
            return;
        }
        for c in 0..peaks.len() {
            if !used.contains(&c) {
                used.push(c);
                search(peaks, phases, used, best);
                used.pop();
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    search(peaks, phases, &mut Vec::new(), &mut best);
    best.1
}

/// Pseudoeigenfunction family on the circle, similarity, embedding, fuzzy
/// clustering, per-cluster measures and signal reconstruction.
///
/// `truth` pairs each true per-sample phase with its ground-truth signal,
/// aligned with the snapshot rows.
pub fn run_clustering(
    kind: PipelineKind,
    snap: &SnapshotMatrices,
    params: &ClusterParams,
    route: KoopmanRoute,
    seed: u64,
    signal: &[f64],
    truth: &[(f64, Vec<f64>)],
) -> Result<ClusterOutcome> {
    let ev = ResolventEvaluator::from_snapshots(snap, ResolventMode::Koopman, route)?;
    let gr = grams(snap);
    let points = circle_points(params.grid_radius, params.grid_points)?;
    let members = match kind {
        PipelineKind::Resolvent => resolvent_family(&ev, &points)?,
        PipelineKind::ResDmd => resdmd_family(&ResDmdScanner::new(&gr)?, &points)?,
    };
    let family = PseudoeigenFamily::new(members, gr.g)?;
    let sim = similarity(&family, &params.subspace)?;
    let embedding = spectral_embed(&sim, params.k_embed)?;
    let clusters = fuzzy_cmeans(&embedding.coords, params.clusters, params.fuzzifier, seed)?;
    let measures = cluster_measures(
        &family,
        ev.operator(),
        &clusters,
        params.epsilon,
        params.moment_count,
        params.angle_points,
    )?;
    let reconstruction = reconstruct(&signal[..snap.len()], snap, &clusters, &family)?;
    let peaks: Vec<f64> = measures.iter().map(SpectralMeasure::peak_angle).collect();
    let phases: Vec<f64> = truth.iter().map(|(p, _)| *p).collect();
    let matches = match_modes(&peaks, &phases)
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let (phase, mode) = &truth[i];
            let comp = &reconstruction.components[c];
            let (mut num, mut den) = (0.0, 0.0);
            for (a, b) in comp.iter().zip(mode) {
                num += (a - b) * (a - b);
                den += b * b;
            }
            ModeMatch {
                mode: i,
                cluster: c,
                true_phase: *phase,
                peak_angle: peaks[c],
                phase_error: (peaks[c] - phase).abs() / phase.abs(),
                rel_rmse: (num / den).sqrt(),
            }
        })
        .collect();
    Ok(ClusterOutcome {
        kind,
        family,
        similarity: sim,
        embedding,
        clusters,
        measures,
        reconstruction,
        matches,
    })
}

#[derive(Serialize)]
struct ClusterFile<'a> {
    pipeline: PipelineKind,
    #[serde(flatten)]
    report: ClusterReport,
    mode_matches: &'a [ModeMatch],
    embedding_components: usize,
    objective_history: &'a [f64],
}

fn write_outcome(sink: &mut ArtifactSink, out: &ClusterOutcome, dt: f64) -> Result<()> {
    let p = out.kind.prefix();
    sink.write_json(&format!("{p}similarity.json"), &out.similarity.s)?;
    sink.write_json(
        &format!("{p}clusters.json"),
        &ClusterFile {
            pipeline: out.kind,
            report: out.report(),
            mode_matches: &out.matches,
            embedding_components: out.embedding.components,
            objective_history: &out.clusters.objective_history,
        },
    )?;
    sink.write_with(&format!("{p}spectral_measure.csv"), |w| write_measures_csv(w, &out.measures))?;
    let named: Vec<(String, Vec<f64>)> =
        out.measures.iter().enumerate().map(|(j, m)| (format!("cluster {j}"), m.density.clone())).collect();
    let series: Vec<(&str, Vec<f64>)> = named.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    if let Some(m) = out.measures.first() {
        sink.write(
            &format!("{p}spectral_measure.svg"),
            line_svg("cluster spectral measures against angle", &m.angles, &series).as_bytes(),
        )?;
    }
    sink.write_with(&format!("{p}reconstruction.csv"), |w| out.reconstruction.write_csv(w, dt))
}

pub(super) fn run(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<OscillatorSummary> {
    let osc = &cfg.oscillators;
    let sim = sink.stage("simulate", |s| {
        let run = simulate_oscillators(osc, cfg.seed)?;
        s.write_with("signal.csv", |w| run.signal.write_csv(w))?;
        s.write_with("internal.csv", |w| run.internal.write_csv(w))?;
        Ok(run)
    })?;
    let signal = sim.observation();
    let snap = sink.stage("dictionary", |_| {
        if cfg.dictionary.kind != BasisKind::TimeDelay {
            return Err(Error::config("dictionary.kind", "the oscillators experiment needs time_delay"));
        }
        time_delay_embed(&signal, cfg.dictionary.delay_width, osc.dt)
    })?;
    let rows = snap.len();
    let eigs = sink.stage("edmd", |s| {
        let k = crate::edmd::koopman(&snap, cfg.koopman_route)?;
        let eigs = eigenvalues(&k.k)?;
        write_eigenvalues(s, "eigenvalues.csv", &eigs)?;
        Ok(eigs)
    })?;
    let phases = [osc.discrete_phase(0), osc.discrete_phase(1)];
    let truth: Vec<(f64, Vec<f64>)> = (0..2).map(|i| (phases[i], sim.mode(i)[..rows].to_vec())).collect();
    let p = &cfg.cluster;
    let resolvent = sink.stage("cluster", |s| {
        let out = run_clustering(PipelineKind::Resolvent, &snap, p, cfg.koopman_route, cfg.seed, &signal, &truth)?;
        write_outcome(s, &out, osc.dt)?;
        Ok(out)
    })?;
    let scan = PseudospectrumGrid {
        points: resolvent.family.members.iter().map(|m| m.z).collect(),
        inv_norms: resolvent.family.members.iter().map(|m| 1.0 / m.amplification).collect(),
        kind: GridKind::Circle { radius: p.grid_radius },
    };
    write_grid(sink, "scan_family", &scan, &format!("1/|R(z, K_N)| on |z| = {}", p.grid_radius))?;
    let resdmd = if p.compare_resdmd {
        Some(sink.stage("cluster_resdmd", |s| {
            let out = run_clustering(PipelineKind::ResDmd, &snap, p, cfg.koopman_route, cfg.seed, &signal, &truth)?;
            write_outcome(s, &out, osc.dt)?;
            Ok(out)
        })?)
    } else {
        None
    };
    Ok(OscillatorSummary {
        dict_size: snap.dict_size(),
        rows,
        phases,
        eigenvalues: eigs,
        scan,
        resolvent,
        resdmd,
    })
}
