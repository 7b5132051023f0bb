use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resolvent_dmd::experiment::{self, ExperimentConfig, ExperimentKind, ValidateOptions};
use resolvent_dmd::resolvent::{detect, PseudospectrumGrid};
use resolvent_dmd::systems::{simulate_lorenz, simulate_oscillators, simulate_pendulum};
use resolvent_dmd::{Error, Result};

#[derive(Parser)]
#[command(name = "rdmd", version, about = "Koopman pseudospectra and spectral clustering from snapshot data")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Source {
    /// JSON experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Full configured pipeline.
    Run(Source),
    /// Synthetic property suites; prints the JSON report.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Adds this value to every entry of K_N in the direct route.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trajectory only.
    Simulate(Source),
    /// Resolvent scans without detection or growth study.
    Scan(Source),
    /// Thresholds a scan CSV, or runs scans plus detection from a config.
    Detect {
        #[command(flatten)]
        source: Source,
        #[arg(long, requires = "threshold")]
        input: Option<PathBuf>,
        #[arg(long)]
        threshold: Vec<f64>,
    },
    /// Residual bounds on the nested synthetic operator.
    Bound(Source),
    /// Oscillator clustering.
    Cluster(Source),
    /// SVG of a scan CSV.
    Plot {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn load(src: &Source) -> Result<ExperimentConfig> {
    let mut cfg = match (&src.config, &src.preset) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config {
            path: "config".into(),
            reason: "pass --config <path> or --preset <name>".into(),
        }),
    };
    if let Some(seed) = src.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &src.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn require(cfg: &ExperimentConfig, kinds: &[ExperimentKind], verb: &str) -> Result<()> {
    if kinds.contains(&cfg.experiment) {
        Ok(())
    } else {
        Err(Error::Config {
            path: "experiment".into(),
            reason: format!("`{verb}` does not apply to {:?}", cfg.experiment),
        })
    }
}

fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let out = experiment::run(cfg)?;
    println!(
        "{} artifacts written to {}",
        out.manifest.artifacts.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    let write = |name: &str, t: &resolvent_dmd::systems::Trajectory| -> Result<()> {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        fs::write(dir.join(name), buf)?;
        Ok(())
    };
    match cfg.experiment {
        ExperimentKind::Pendulum => write("trajectory.csv", &simulate_pendulum(&cfg.pendulum, cfg.seed)?),
        ExperimentKind::Lorenz => write(
            "trajectory.csv",
            &simulate_lorenz(&cfg.lorenz, &cfg.lorenz.initial_state, cfg.seed)?,
        ),
        ExperimentKind::Oscillators => {
            let run = simulate_oscillators(&cfg.oscillators, cfg.seed)?;
            write("signal.csv", &run.signal)?;
            write("internal.csv", &run.internal)
        }
        ExperimentKind::Synthetic => require(cfg, &[], "simulate"),
    }
}

fn detect_file(input: &Path, thresholds: &[f64], out: &Path) -> Result<()> {
    let grid = PseudospectrumGrid::read_csv(&fs::read_to_string(input)?)?;
    fs::create_dir_all(out)?;
    for t in thresholds {
        let d = detect(&grid, *t)?;
        let mut buf = Vec::new();
        d.write_csv(&grid, &mut buf)?;
        fs::write(out.join(format!("detect_t{t:e}.csv")), buf)?;
        println!("threshold {t:e}: {} of {} points", d.count(), grid.len());
    }
    Ok(())
}

fn dispatch(verb: Verb) -> Result<()> {
    match verb {
        Verb::Run(src) => execute(&load(&src)?),
        Verb::Validate { seed, perturb, out } => {
            let report = experiment::validate(&ValidateOptions { perturb, seed });
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("validate.json"), format!("{text}\n"))?;
            }
            println!("{text}");
            Ok(())
        }
        Verb::Simulate(src) => simulate(&load(&src)?),
        Verb::Scan(src) => {
            let mut cfg = load(&src)?;
            require(&cfg, &[ExperimentKind::Pendulum, ExperimentKind::Lorenz], "scan")?;
            cfg.thresholds.clear();
            cfg.dictionary_sizes.clear();
            cfg.grid.generator_lines = None;
            execute(&cfg)
        }
        Verb::Detect { source, input, threshold } => match input {
            Some(path) => {
                let out = source.out.unwrap_or_else(|| PathBuf::from("."));
                detect_file(&path, &threshold, &out)
            }
            None => {
                let mut cfg = load(&source)?;
                require(&cfg, &[ExperimentKind::Pendulum], "detect")?;
                if !threshold.is_empty() {
                    cfg.thresholds = threshold;
                }
                cfg.dictionary_sizes.clear();
                cfg.grid.generator_lines = None;
                execute(&cfg)
            }
        },
        Verb::Bound(src) => {
            let (seed, contours, out) = match (&src.config, &src.preset) {
                (None, None) => (
                    src.seed.unwrap_or(0),
                    Vec::new(),
                    src.out.clone().unwrap_or_else(|| PathBuf::from("out/bounds")),
                ),
                _ => {
                    let cfg = load(&src)?;
                    (cfg.seed, cfg.contours, cfg.output_dir)
                }
            };
            let report = experiment::run_bounds(seed, &contours)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("bounds.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            for b in &report.bounds {
                println!(
                    "eta = {:e}, |lambda_ref - mean| = {:e}, multiplicity {}",
                    b.eta, b.error, b.multiplicity
                );
            }
            Ok(())
        }
        Verb::Cluster(src) => {
            let cfg = load(&src)?;
            require(&cfg, &[ExperimentKind::Oscillators], "cluster")?;
            execute(&cfg)
        }
        Verb::Plot { input, out, title } => {
            let grid = PseudospectrumGrid::read_csv(&fs::read_to_string(&input)?)?;
            let title = title.unwrap_or_else(|| input.display().to_string());
            let out = out.unwrap_or_else(|| input.with_extension("svg"));
            fs::write(&out, grid.to_svg(&title))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
