//! Paired comparisons across seeds: bootstrap intervals, t and signed-rank tests, effect
//! sizes and Holm's step-down correction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::rng::stream;
use crate::special::{norm_cdf, t_two_sided_p};

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Sample sizes up to this use the exact signed-rank null distribution.
pub const WILCOXON_EXACT_MAX: usize = 25;
const BOOTSTRAP_AXIS: u64 = 0xB007;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(samples: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(contract("bootstrap needs at least one sample"));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(contract("bootstrap needs resamples > 0 and a level in (0, 1)"));
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Ok((samples[0], samples[0]));
    }
    let n = samples.len();
    let mut rng = stream(seed, BOOTSTRAP_AXIS, n as u64);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub n: usize,
    /// Mean of `a - b`.
    pub mean_diff: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// NaN when the differences have zero variance.
    pub t: f64,
    pub p_t: f64,
    /// Sum of ranks of positive differences.
    pub wilcoxon_w: f64,
    pub p_wilcoxon: f64,
    pub cohens_d: f64,
    /// Filled in by [`holm_bonferroni`] over a family of comparisons.
    pub p_holm: Option<f64>,
}

/// Paired comparison of `a` against `b` with the default bootstrap settings.
pub fn paired_compare(a: &[f64], b: &[f64]) -> Result<StatReport> {
    paired_compare_with(a, b, DEFAULT_RESAMPLES, 0)
}

pub fn paired_compare_with(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<StatReport> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(contract("paired comparison needs two samples of equal length >= 2"));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diff.len();
    let m = mean(&diff);
    let sd = sample_sd(&diff);
    let (t, p_t, cohens_d) = if sd > 0.0 {
        let t = m / (sd / (n as f64).sqrt());
        (t, t_two_sided_p(t, (n - 1) as f64), m / sd)
    } else if m == 0.0 {
        (f64::NAN, 1.0, 0.0)
    } else {
        (f64::NAN, 0.0, m.signum() * f64::INFINITY)
    };
    let (ci_lo, ci_hi) = bootstrap_ci(&diff, resamples, DEFAULT_LEVEL, seed)?;
    let (wilcoxon_w, p_wilcoxon) = wilcoxon_signed_rank(&diff);
    Ok(StatReport {
        n,
        mean_diff: m,
        ci_lo,
        ci_hi,
        t,
        p_t,
        wilcoxon_w,
        p_wilcoxon,
        cohens_d,
        p_holm: None,
    })
}

/// Two-sided signed-rank test on paired differences. Zeros are dropped; tied magnitudes get
/// average ranks. Returns `(W+, p)`.
pub fn wilcoxon_signed_rank(diff: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = diff.iter().copied().filter(|&x| x != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| nz[i].abs().total_cmp(&nz[j].abs()));
    // doubled average ranks stay integral under ties
    let mut rank2 = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[order[j + 1]].abs() == nz[order[i]].abs() {
            j += 1;
        }
        let r2 = (i + 1 + j + 1) as u64;
        for k in i..=j {
            rank2[order[k]] = r2;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w2: u64 = (0..n).filter(|&k| nz[k] > 0.0).map(|k| rank2[k]).sum();
    let w = w2 as f64 / 2.0;

    let p = if n <= WILCOXON_EXACT_MAX {
        exact_signed_rank_p(&rank2, w2)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let dev = w - mu;
        let z = (dev - 0.5 * dev.signum()) / var.sqrt();
        (2.0 * (1.0 - norm_cdf(z.abs()))).min(1.0)
    };
    (w, p)
}

/// Null distribution of the doubled statistic by subset-sum counting over all sign patterns.
fn exact_signed_rank_p(rank2: &[u64], w2: u64) -> f64 {
    let total: u64 = rank2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    for &r in rank2 {
        let r = r as usize;
        for s in (r..counts.len()).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(rank2.len() as i32);
    let lower: f64 = counts[..=w2 as usize].iter().sum::<f64>() / all;
    let upper: f64 = counts[w2 as usize..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Holm's step-down adjustment, returned in the input order.
pub fn holm_bonferroni(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(contract(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * pvals[i]).min(1.0));
        adjusted[i] = running;
    }
    Ok(adjusted)
}
