//! The paired-comparison toolkit used to summarize sweeps, on hand-made data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spad_audit::bench::{bootstrap_ci, holm_bonferroni, paired_compare, wilcoxon_signed_rank};

fn main() -> spad_audit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let baseline: Vec<f64> = (0..20).map(|_| rng.random_range(1.0..2.0)).collect();
    let improved: Vec<f64> = baseline.iter().map(|b| b * rng.random_range(0.7..1.0)).collect();
    let noise: Vec<f64> = baseline.iter().map(|b| b + rng.random_range(-0.05..0.05)).collect();

    let (lo, hi) = bootstrap_ci(&baseline, 2000, 0.95, 1)?;
    println!("mean of baseline, 95% percentile bootstrap: [{lo:.4}, {hi:.4}]");

    let mut pvals = Vec::new();
    for (name, other) in [("improved", &improved), ("noise", &noise)] {
        let r = paired_compare(&baseline, other)?;
        println!(
            "\nbaseline - {name}: mean {:.4} CI [{:.4}, {:.4}], t = {:.3} (p {:.2e}), W+ = {} (p {:.2e}), d = {:.2}",
            r.mean_diff, r.ci_lo, r.ci_hi, r.t, r.p_t, r.wilcoxon_w, r.p_wilcoxon, r.cohens_d
        );
        pvals.push(r.p_t);
    }
    let holm: Vec<String> = holm_bonferroni(&pvals)?.iter().map(|p| format!("{p:.2e}")).collect();
    println!("\nHolm-adjusted p values: {}", holm.join(", "));

    // Exact signed-rank distribution on a tiny sample.
    let (w, p) = wilcoxon_signed_rank(&[0.3, -0.1, 0.4, 0.2, 0.5]);
    println!("Wilcoxon on five differences: W+ = {w}, two-sided p = {p:.4}");
    Ok(())
}
