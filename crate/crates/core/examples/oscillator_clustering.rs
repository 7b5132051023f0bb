//! Pseudoeigenfunction clustering of two damped oscillators observed through
//! their sum.

use resolvent_dmd::experiment::{self, ExperimentConfig, RunSummary};

fn main() -> resolvent_dmd::Result<()> {
    let noiseless = std::env::args().any(|a| a == "--noiseless");
    let mut cfg = ExperimentConfig::preset("oscillators-desk")?;
    if noiseless {
        cfg.oscillators.sigma1 = 0.0;
        cfg.oscillators.sigma2 = 0.0;
        cfg.oscillators.meas_noise_std = 0.0;
    }
    cfg.output_dir = std::env::temp_dir().join("rdmd-oscillators");
    let out = experiment::run(&cfg)?;
    let RunSummary::Oscillators(s) = out.summary else { unreachable!() };
    println!("true phases {:.4} and {:.4}", s.phases[0], s.phases[1]);
    for o in std::iter::once(&s.resolvent).chain(s.resdmd.as_ref()) {
        println!("{:?}: entropy {:.3}, peaks {:.4?}", o.kind, o.clusters.mean_entropy(), o.peak_angles());
        for m in &o.matches {
            println!(
                "  mode {} -> cluster {}: peak error {:.1}%, reconstruction rmse {:.3}",
                m.mode,
                m.cluster,
                100.0 * m.phase_error,
                m.rel_rmse
            );
        }
    }
    Ok(())
}
