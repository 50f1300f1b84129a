//! A policy that hedges over developer types, compared with one tuned to a single type.

use spad_audit::design::{gap_under, WeightedType};
use spad_audit::{robust_spad, spad_against, DeveloperType, Environment, SpadOptions};

fn main() -> spad_audit::Result<()> {
    let env = Environment::exponential(
        vec![1.2, 0.7, 1.0],
        vec![0.5, 0.3, 0.2],
        vec![0.4, 2.5, 1.0],
        1.0,
        2.0,
        1.5,
        1.0,
    )?;
    let types = [
        WeightedType::new(DeveloperType::fully_strategic(), 1.0),
        WeightedType::new(DeveloperType::BoundedlyRational { k: 3, eta: 0.2 }, 1.0),
        WeightedType::new(DeveloperType::NonStrategic, 1.0),
    ];
    let opts = SpadOptions { restarts: 3, ..SpadOptions::default() };

    let nominal = spad_against(&env, &types[0].developer, &opts)?;
    let robust = robust_spad(&env, &types, &opts)?;

    println!("{:<24} {:>12} {:>12}", "developer", "nominal", "robust");
    let mut worst = (0.0f64, 0.0f64);
    for t in &types {
        let a = gap_under(&env, &nominal.policy, &t.developer)?;
        let b = gap_under(&env, &robust.policy, &t.developer)?;
        worst = (worst.0.max(a), worst.1.max(b));
        println!("{:<24} {a:>12.5} {b:>12.5}", t.developer.label());
    }
    println!("{:<24} {:>12.5} {:>12.5}", "worst case", worst.0, worst.1);
    println!(
        "\nrobust policy: worst type #{} after {} rounds, pi = {:.3?}",
        robust.worst_type,
        robust.rounds,
        robust.policy.pi()
    );
    Ok(())
}
