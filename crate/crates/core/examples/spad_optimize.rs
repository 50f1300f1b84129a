//! Optimizing the audit policy with the bilevel projected-gradient method and writing its trace.
//!
//! Usage: `cargo run --release --example spad_optimize [trace.csv]`

use std::fs::File;

use spad_audit::bench::{sample_environment, SamplingConfig};
use spad_audit::design::{baseline_policy, gap_under, hypergradient, BaselineKind, HypergradMode};
use spad_audit::{spad, DeveloperType, SpadOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = sample_environment(&SamplingConfig { d: 6, ..SamplingConfig::default() }, 3)?;
    let fs = DeveloperType::fully_strategic();

    for kind in [BaselineKind::Unif, BaselineKind::Hp, BaselineKind::Wp] {
        let p = baseline_policy(&kind, &env)?;
        println!("{:<5} B_w = {:.5}", kind.label(), gap_under(&env, &p, &fs)?);
    }

    let start = baseline_policy(&BaselineKind::Unif, &env)?;
    let g = hypergradient(&env, &start, HypergradMode::Analytic)?;
    println!("\nhypergradient at the uniform rule: |g| = {:.4}", g.norm());
    println!("  d B_w / d eps = {:.4?}", g.grad_eps);

    let opts = SpadOptions { rng_seed: 11, ..SpadOptions::default() };
    let out = spad(&env, &opts)?;
    println!("\nSPAD  B_w = {:.5} after {} iterations (converged: {})", out.bw, out.iterations, out.converged);
    println!("  pi  = {:.3?}", out.policy.pi());
    println!("  eps = {:.3?}", out.policy.eps());
    println!("  non-monotone steps in the trace: {}", out.trace.monotonicity_violations());

    if let Some(path) = std::env::args().nth(1) {
        out.trace.write_csv(File::create(&path)?)?;
        println!("trace written to {path}");
    }
    Ok(())
}
