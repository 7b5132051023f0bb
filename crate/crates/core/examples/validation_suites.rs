//! Runs the property suites, then again with the perturbation hook.

use resolvent_dmd::experiment::{validate, ValidateOptions};

fn main() {
    for perturb in [0.0, 1e-6] {
        println!("perturb = {perturb:e}");
        for r in validate(&ValidateOptions { perturb, seed: 0 }) {
            let tag = if r.passed { "ok  " } else { "FAIL" };
            println!("  {tag} {:<24} {:.2e} (tol {:.0e})", r.suite, r.residual, r.tolerance);
        }
    }
}
