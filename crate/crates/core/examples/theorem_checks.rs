//! Numerical checks of the structural results: the strategic gap, the direction of improvement
//! away from the uniform rule, the tight-budget lower bound, the non-proportional optimum and
//! the analytic hypergradient.

use spad_audit::verify::{
    corollary_direction, corollary_instances, counterexample_instance, hypergradient_check, lower_bound_reference,
    lower_bound_trajectory, nonproportional_counterexample, run_check, theorem1_grid, Check, CheckStatus,
    LOWER_BOUND_EPS, VERIFY_MASTER_SEED,
};

fn main() -> spad_audit::Result<()> {
    let (_, grid) = theorem1_grid(100, VERIFY_MASTER_SEED)?;
    println!(
        "strategic gap: {}/{} screened cells positive ({} excluded), smallest gap {:.4}",
        grid.positive, grid.screened_in, grid.excluded, grid.min_gap
    );

    // The improving direction holds for equal harms; with heterogeneous harms it can fail.
    for equal in [true, false] {
        let envs = corollary_instances(200, VERIFY_MASTER_SEED, equal)?;
        let mut fails = 0;
        let mut worst = f64::NEG_INFINITY;
        for env in &envs {
            let r = corollary_direction(env)?;
            if r.status == CheckStatus::Fail {
                fails += 1;
            }
            worst = worst.max(r.number("derivative").unwrap_or(f64::NEG_INFINITY));
        }
        let label = if equal { "equal harms" } else { "random harms" };
        println!("direction check, {label}: {fails}/{} fail, largest derivative {worst:+.4}", envs.len());
    }

    let lb = lower_bound_trajectory(&lower_bound_reference(), &LOWER_BOUND_EPS)?;
    println!("\nlower bound {:?}: deficits {}", lb.status, lb.witness["deficits"]);

    let cx = nonproportional_counterexample()?;
    println!(
        "\nnon-proportional optimum {:?} on {:?}:\n{}",
        cx.status,
        counterexample_instance([2.0, 1.0]).det,
        serde_json::to_string_pretty(&cx.witness).unwrap_or_default()
    );

    let hg = hypergradient_check(20, VERIFY_MASTER_SEED)?;
    println!("\nhypergradient vs central differences: {:?}, max relative error {:?}", hg.status, hg.number("max_rel_error"));

    let vi = run_check(Check::HypVi, 0, VERIFY_MASTER_SEED)?;
    println!("hypothesis checks: {} reports, all ok: {}", vi.len(), vi.iter().all(|r| r.ok()));
    Ok(())
}
