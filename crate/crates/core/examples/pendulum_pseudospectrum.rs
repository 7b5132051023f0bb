//! Inverse resolvent norms of the Euler pendulum on three circles and the
//! detections below each threshold.

use resolvent_dmd::experiment::{self, ExperimentConfig, RunSummary};

fn main() -> resolvent_dmd::Result<()> {
    let mut cfg = ExperimentConfig::preset("pendulum-desk")?;
    cfg.dictionary_sizes.clear();
    cfg.grid.generator_lines = None;
    cfg.output_dir = std::env::temp_dir().join("rdmd-pendulum");
    let out = experiment::run(&cfg)?;
    let RunSummary::Pendulum(s) = out.summary else { unreachable!() };
    println!("dictionary size {}", s.dict_size);
    for (r, grid) in cfg.grid.circle_radii.iter().zip(&s.scans) {
        println!("|z| = {r}: median 1/|R| = {:.3e}, min {:.3e}", grid.median(), grid.min());
    }
    for (r, t, n) in &s.detections {
        println!("|z| = {r}, threshold {t:e}: {n} points");
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}
