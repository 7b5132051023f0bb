//! Generator pseudospectrum of the scaled Lorenz system beside the ResDMD
//! residual on the same rectangle.

use resolvent_dmd::experiment::{self, ExperimentConfig, RunSummary};

fn main() -> resolvent_dmd::Result<()> {
    let mut cfg = ExperimentConfig::preset("lorenz-desk")?;
    cfg.output_dir = std::env::temp_dir().join("rdmd-lorenz");
    let out = experiment::run(&cfg)?;
    let RunSummary::Lorenz(s) = out.summary else { unreachable!() };
    println!("N = {}, mode {:?}", s.dict_size, s.mode);
    println!("scaling center {:.3?}, scale {:.3?}", s.center, s.scale);
    let i = s.scan.argmin();
    let j = s.resdmd.argmin();
    println!("resolvent minimum {:.3e} at {:.3}", s.scan.inv_norms[i], s.scan.points[i]);
    println!("ResDMD minimum    {:.3e} at {:.3}", s.resdmd.inv_norms[j], s.resdmd.points[j]);
    println!("ResDMD used Cholesky whitening: {}", s.resdmd_cholesky);
    println!("heatmaps in {}", cfg.output_dir.display());
    Ok(())
}
