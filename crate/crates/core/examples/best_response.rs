//! How the three developer types respond to one audit policy.
//!
//! The fully strategic developer solves its cost-constrained problem exactly, the boundedly
//! rational one takes a few projected-gradient steps, and the non-strategic one spreads its
//! budget in proportion to welfare-weighted harm.

use spad_audit::design::{baseline_policy, BaselineKind};
use spad_audit::{best_response, compute_metrics, DeveloperType, Environment};

fn main() -> spad_audit::Result<()> {
    let env = Environment::exponential(
        vec![1.0, 0.6, 1.4, 0.8],
        vec![0.4, 0.3, 0.2, 0.1],
        vec![2.0, 0.5, 1.0, 3.0],
        1.0,
        2.0,
        2.0,
        1.0,
    )?;
    let policy = baseline_policy(&BaselineKind::Hp, &env)?;
    println!("harm-proportional policy: pi = {:.3?}", policy.pi());

    let developers = [
        DeveloperType::fully_strategic(),
        DeveloperType::BoundedlyRational { k: 1, eta: 0.1 },
        DeveloperType::boundedly_rational(),
        DeveloperType::BoundedlyRational { k: 200, eta: 0.1 },
        DeveloperType::NonStrategic,
    ];
    println!("\n{:<28} {:>8} {:>8} {:>8} {:>10}", "developer", "DH", "TRH", "B_w", "cost");
    for dev in &developers {
        let br = best_response(&env, &policy, dev)?;
        let m = compute_metrics(&env, &policy, &br.m)?;
        let label = match dev {
            DeveloperType::BoundedlyRational { k, .. } => format!("{} (k = {k})", dev.label()),
            _ => dev.label().to_string(),
        };
        println!("{label:<28} {:>8.4} {:>8.4} {:>8.4} {:>10.4}", m.dh, m.trh, m.bw, br.cost_used);
    }

    let fs = best_response(&env, &policy, &DeveloperType::fully_strategic())?;
    println!("\nexact response: m* = {:.4?}", fs.m);
    println!("budget multiplier {:.5}, KKT residual {:.2e}, {} iterations", fs.lambda, fs.kkt_residual, fs.iterations);
    Ok(())
}
