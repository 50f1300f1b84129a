//! Detectability curves of concrete privacy mechanisms and their exponential surrogates.

use spad_audit::model::{calibrate_mechanism, DetectabilitySpec};

fn main() -> spad_audit::Result<()> {
    let mechanisms = [
        DetectabilitySpec::GaussianReduced { sensitivity: 1.0, delta_dp: 1e-5, level: 0.05, h_ref: 1.0 },
        DetectabilitySpec::LaplaceReduced { sensitivity: 1.0, c_null: 0.0, h_ref: 1.0 },
        DetectabilitySpec::RandomizedResponseReduced { n: 100.0, level: 0.05, h_ref: 0.2 },
    ];
    let grid = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0];
    for mech in mechanisms {
        let cal = calibrate_mechanism(mech)?;
        let surrogate = cal.surrogate();
        println!("{mech:?}\n  fitted kappa = {:.4}", cal.kappa_fit);
        println!("  {:>6} {:>10} {:>10}", "eps", "alpha", "surrogate");
        for eps in grid {
            println!("  {eps:>6.2} {:>10.4} {:>10.4}", cal.alpha(eps)?, surrogate.alpha(eps)?);
        }
        // Budget needed to reach a target detection probability.
        println!("  eps for alpha = 0.5: {:.4}\n", mech.inverse(0.5)?);
    }
    Ok(())
}
