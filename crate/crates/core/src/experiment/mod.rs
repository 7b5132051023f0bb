//! Configured end-to-end runs: simulation, dictionary, Koopman matrix,
//! resolvent scans, detection, bounds and clustering, with every artifact
//! recorded in a digest manifest.

mod oscillators;
mod pendulum;
mod lorenz;
mod synthetic;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::SubspaceOptions;
use crate::dictionary::BasisSpec;
use crate::edmd::KoopmanRoute;
use crate::error::{Error, Result};
use crate::resolvent::{PseudospectrumGrid, ResolventMode};
use crate::spectral::Contour;
use crate::systems::{fmt17, LorenzConfig, OscillatorConfig, PendulumConfig};

pub use oscillators::{run_clustering, ClusterOutcome, ModeMatch, OscillatorSummary, PipelineKind};
pub use pendulum::{GrowthEntry, PendulumSummary};
pub use lorenz::LorenzSummary;
pub use synthetic::{run_bounds, validate, BoundsReport, NestedPair, SuiteRecord, SyntheticSummary, ValidateOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Pendulum,
    Lorenz,
    Oscillators,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectangleSpec {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

/// Vertical lines `z = x + iy` scanned with the generator resolvent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorLines {
    pub real_parts: Vec<f64>,
    pub im_range: [f64; 2],
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub circle_radii: Vec<f64>,
    pub circle_points: usize,
    pub rectangle: Option<RectangleSpec>,
    pub generator_lines: Option<GeneratorLines>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            circle_radii: vec![1.01, 1.1, 1.5],
            circle_points: 360,
            rectangle: None,
            generator_lines: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    pub grid_radius: f64,
    pub grid_points: usize,
    pub subspace: SubspaceOptions,
    pub k_embed: usize,
    pub clusters: usize,
    pub fuzzifier: f64,
    pub epsilon: f64,
    pub moment_count: usize,
    pub angle_points: usize,
    /// Also runs the pipeline on ResDMD minimizers.
    pub compare_resdmd: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            grid_radius: 1.01,
            grid_points: 96,
            subspace: SubspaceOptions::default(),
            k_embed: 3,
            clusters: 3,
            fuzzifier: 2.0,
            epsilon: 0.05,
            moment_count: 100,
            angle_points: 720,
            compare_resdmd: true,
        }
    }
}

fn default_route() -> KoopmanRoute {
    KoopmanRoute::GramRoute
}

fn default_mode() -> ResolventMode {
    ResolventMode::Koopman
}

fn default_quadrature_order() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment definition. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub pendulum: PendulumConfig,
    #[serde(default)]
    pub lorenz: LorenzConfig,
    #[serde(default)]
    pub oscillators: OscillatorConfig,
    #[serde(default)]
    pub dictionary: BasisSpec,
    /// Dictionary sizes for the growth study (ranked subsets of `dictionary`).
    #[serde(default)]
    pub dictionary_sizes: Vec<usize>,
    #[serde(default = "default_route")]
    pub koopman_route: KoopmanRoute,
    #[serde(default = "default_mode")]
    pub resolvent_mode: ResolventMode,
    #[serde(default = "default_quadrature_order")]
    pub quadrature_order: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub contours: Vec<Contour>,
    #[serde(default)]
    pub cluster: ClusterParams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

pub const PRESET_NAMES: [&str; 5] = [
    "pendulum-desk",
    "pendulum-paper",
    "lorenz-desk",
    "oscillators-desk",
    "oscillators-paper",
];

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "pendulum-desk" => include_str!("../../presets/pendulum-desk.json"),
        "pendulum-paper" => include_str!("../../presets/pendulum-paper.json"),
        "lorenz-desk" => include_str!("../../presets/lorenz-desk.json"),
        "oscillators-desk" => include_str!("../../presets/oscillators-desk.json"),
        "oscillators-paper" => include_str!("../../presets/oscillators-paper.json"),
        _ => return None,
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| {
            Error::config("preset", format!("unknown preset `{name}` (known: {})", PRESET_NAMES.join(", ")))
        })?;
        Self::from_json(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Checks every field used by the configured experiment; errors carry
    /// the dotted field path.
    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            ExperimentKind::Pendulum => {
                self.pendulum.validate().map_err(|e| e.at("pendulum"))?;
                self.dictionary.validate().map_err(|e| e.at("dictionary"))?;
                for (i, n) in self.dictionary_sizes.iter().enumerate() {
                    if *n == 0 {
                        return Err(Error::config(format!("dictionary_sizes[{i}]"), "must be positive"));
                    }
                }
                self.validate_circles()?;
            }
            ExperimentKind::Lorenz => {
                self.lorenz.validate().map_err(|e| e.at("lorenz"))?;
                self.dictionary.validate().map_err(|e| e.at("dictionary"))?;
                if self.quadrature_order == 0 || self.quadrature_order > crate::dictionary::MAX_RULE_ORDER {
                    return Err(Error::config("quadrature_order", "must lie in 1..=64"));
                }
                let Some(r) = &self.grid.rectangle else {
                    return Err(Error::config("grid.rectangle", "required for the lorenz experiment"));
                };
                if r.nx < 2 || r.ny < 2 {
                    return Err(Error::config("grid.rectangle", "need at least 2 points per axis"));
                }
                if r.re[0] >= r.re[1] || r.im[0] >= r.im[1] {
                    return Err(Error::config("grid.rectangle", "bounds must be increasing"));
                }
            }
            ExperimentKind::Oscillators => {
                self.oscillators.validate().map_err(|e| e.at("oscillators"))?;
                self.dictionary.validate().map_err(|e| e.at("dictionary"))?;
                let c = &self.cluster;
                let checks = [
                    (c.grid_radius > 0.0 && c.grid_radius.is_finite(), "cluster.grid_radius", "must be positive"),
                    (c.grid_points >= 4, "cluster.grid_points", "need at least 4"),
                    (c.subspace.width >= 1, "cluster.subspace.width", "must be at least 1"),
                    (c.k_embed >= 1, "cluster.k_embed", "must be at least 1"),
                    (c.clusters >= 2, "cluster.clusters", "need at least 2"),
                    (c.clusters <= c.grid_points, "cluster.clusters", "exceeds grid points"),
                    (c.fuzzifier > 1.0, "cluster.fuzzifier", "must exceed 1"),
                    (c.epsilon > 0.0 && c.epsilon < 1.0, "cluster.epsilon", "must lie in (0, 1)"),
                    (c.moment_count >= 1, "cluster.moment_count", "must be at least 1"),
                    (c.angle_points >= 8, "cluster.angle_points", "need at least 8"),
                ];
                if let Some((_, path, reason)) = checks.iter().find(|(ok, _, _)| !ok) {
                    return Err(Error::config(*path, *reason));
                }
            }
            ExperimentKind::Synthetic => {}
        }
        if !self.contours.is_empty() && self.experiment != ExperimentKind::Synthetic {
            return Err(Error::config("contours", "bounds are computed for the synthetic experiment only"));
        }
        for (i, t) in self.thresholds.iter().enumerate() {
            if !(t.is_finite() && *t > 0.0) {
                return Err(Error::config(format!("thresholds[{i}]"), "must be positive"));
            }
        }
        for (i, c) in self.contours.iter().enumerate() {
            c.validate().map_err(|e| e.at(&format!("contours[{i}]")))?;
        }
        Ok(())
    }

    fn validate_circles(&self) -> Result<()> {
        if self.grid.circle_points < 4 {
            return Err(Error::config("grid.circle_points", "need at least 4"));
        }
        for (i, r) in self.grid.circle_radii.iter().enumerate() {
            if !(r.is_finite() && *r > 0.0) {
                return Err(Error::config(format!("grid.circle_radii[{i}]"), "must be positive"));
            }
        }
        if let Some(g) = &self.grid.generator_lines {
            if g.points < 2 || g.im_range[0] >= g.im_range[1] {
                return Err(Error::config("grid.generator_lines", "need 2+ points over an increasing range"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifacts: Vec<Artifact>,
    pub wall_times: Vec<StageTime>,
    pub version: String,
}

impl RunManifest {
    /// Re-reads every artifact and compares sizes and digests.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for a in &self.artifacts {
            let bytes = fs::read(root.join(&a.path))?;
            if bytes.len() as u64 != a.bytes || digest(&bytes) != a.sha256 {
                return Err(Error::Inconsistent(format!("artifact `{}` does not match its digest", a.name)));
            }
        }
        Ok(())
    }

    pub fn digests(&self) -> Vec<(String, String)> {
        self.artifacts.iter().map(|a| (a.name.clone(), a.sha256.clone())).collect()
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes artifacts under one directory and records them.
pub struct ArtifactSink {
    root: PathBuf,
    artifacts: Vec<Artifact>,
    wall_times: Vec<StageTime>,
}

impl ArtifactSink {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            artifacts: Vec::new(),
            wall_times: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.artifacts.push(Artifact {
            name: name.to_string(),
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: digest(bytes),
        });
        Ok(())
    }

    /// Renders through a writer callback, then records the bytes.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Runs one named stage, recording wall time and tagging failures.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self).map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: name.to_string(),
                source: Box::new(e),
            },
        });
        self.wall_times.push(StageTime {
            stage: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn manifest(&self, config_hash: &str) -> RunManifest {
        RunManifest {
            config_hash: config_hash.to_string(),
            artifacts: self.artifacts.clone(),
            wall_times: self.wall_times.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// `stem.csv` and `stem.svg` for one scan.
pub(crate) fn write_grid(sink: &mut ArtifactSink, stem: &str, grid: &PseudospectrumGrid, title: &str) -> Result<()> {
    sink.write_with(&format!("{stem}.csv"), |w| grid.write_csv(w))?;
    sink.write(&format!("{stem}.svg"), grid.to_svg(title).as_bytes())
}

pub(crate) fn write_eigenvalues(sink: &mut ArtifactSink, name: &str, eigs: &[Complex64]) -> Result<()> {
    let mut sorted = eigs.to_vec();
    sorted.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.im.total_cmp(&b.im)));
    sink.write_with(name, |w| {
        writeln!(w, "re,im")?;
        for z in &sorted {
            writeln!(w, "{},{}", fmt17(z.re), fmt17(z.im))?;
        }
        Ok(())
    })
}

#[derive(Clone, Debug)]
pub enum RunSummary {
    Pendulum(Box<PendulumSummary>),
    Lorenz(Box<LorenzSummary>),
    Oscillators(Box<OscillatorSummary>),
    Synthetic(Box<SyntheticSummary>),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub summary: RunSummary,
}

/// Executes the configured experiment and writes artifacts plus
/// `manifest.json` into `output_dir`. On failure, completed artifacts are
/// listed in `manifest.partial.json`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut sink = ArtifactSink::new(&cfg.output_dir)?;
    let hash = cfg.hash();
    let result = match cfg.experiment {
        ExperimentKind::Pendulum => pendulum::run(cfg, &mut sink).map(|s| RunSummary::Pendulum(Box::new(s))),
        ExperimentKind::Lorenz => lorenz::run(cfg, &mut sink).map(|s| RunSummary::Lorenz(Box::new(s))),
        ExperimentKind::Oscillators => oscillators::run(cfg, &mut sink).map(|s| RunSummary::Oscillators(Box::new(s))),
        ExperimentKind::Synthetic => synthetic::run(cfg, &mut sink).map(|s| RunSummary::Synthetic(Box::new(s))),
    };
    match result {
        Ok(summary) => {
            let manifest = sink.manifest(&hash);
            let mut text = serde_json::to_string_pretty(&manifest)?;
            text.push('\n');
            fs::write(sink.root().join("manifest.json"), text)?;
            Ok(RunOutcome { manifest, summary })
        }
        Err(e) => {
            let partial = sink.manifest(&hash);
            if let Ok(text) = serde_json::to_string_pretty(&partial) {
                let _ = fs::write(sink.root().join("manifest.partial.json"), text);
            }
            Err(e)
        }
    }
}
