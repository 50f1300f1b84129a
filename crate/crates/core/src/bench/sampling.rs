use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{CostSpec, DetectabilitySpec, Environment, HarmResponseSpec};
use crate::rng::stream;

pub const DEFAULT_MASTER_SEED: u64 = 20_260_101;
/// Pre-draws used to estimate the prior spread of harms for the uncertainty-focused rule.
pub const UF_PRE_DRAWS: usize = 200;
const UF_AXIS: u64 = 0x0F0F_0F0F;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmMode {
    /// Component-wise `Beta(0.5, 2)`.
    Sparse,
    /// Component-wise `Uniform[0.5, 1.5]`.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    /// `kappa_j ~ Uniform[0.1, 2.0]`.
    Heterogeneous,
    /// `kappa_j = 1`.
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WelfareMode {
    /// `w_j = 1/d`.
    Uniform,
    /// `w ~ Dirichlet(0.5)`.
    Dirichlet,
}

/// One point of the synthetic environment distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub d: usize,
    pub harm_mode: HarmMode,
    pub kappa_mode: KappaMode,
    pub cost_p: f64,
    /// Developer budget is `b_factor * d`.
    pub b_factor: f64,
    pub eps_tot: f64,
    pub welfare_mode: WelfareMode,
    pub master_seed: u64,
    /// Stream identifier. Configurations sharing it draw the same `(h, kappa, w)` for a seed.
    pub stream_axis: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            d: 10,
            harm_mode: HarmMode::Dense,
            kappa_mode: KappaMode::Heterogeneous,
            cost_p: 2.0,
            b_factor: 1.0,
            eps_tot: 1.0,
            welfare_mode: WelfareMode::Uniform,
            master_seed: DEFAULT_MASTER_SEED,
            stream_axis: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(contract("d must be positive"));
        }
        if !(self.cost_p > 1.0) {
            return Err(contract("cost exponent must exceed 1"));
        }
        if !(self.b_factor > 0.0) || !(self.eps_tot >= 0.0) || !self.eps_tot.is_finite() {
            return Err(contract("budget factor must be positive and eps_tot finite and nonnegative"));
        }
        Ok(())
    }
}

/// Draws the environment of `seed` under `config`.
///
/// The generator is ChaCha8 keyed by [`crate::rng::stream_seed`]`(master_seed, stream_axis, seed)`.
/// Draw order is fixed (all of `h`, then all of `kappa`, then all welfare draws) and every
/// draw is made whatever the mode, so switching one mode leaves the other components unchanged.
pub fn sample_environment(config: &SamplingConfig, seed: u64) -> Result<Environment> {
    config.validate()?;
    let mut rng = stream(config.master_seed, config.stream_axis, seed);
    let d = config.d;
    let raw_h = draw_harm(config.harm_mode, d, &mut rng);
    let total: f64 = raw_h.iter().sum();
    let h: Vec<f64> = raw_h.iter().map(|x| x * d as f64 / total).collect();

    let kappa_draws: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..=2.0)).collect();
    let kappa = match config.kappa_mode {
        KappaMode::Heterogeneous => kappa_draws,
        KappaMode::Homogeneous => vec![1.0; d],
    };

    let half = Gamma::new(0.5, 1.0).expect("valid gamma");
    let gammas: Vec<f64> = (0..d).map(|_| half.sample(&mut rng)).collect();
    let w = match config.welfare_mode {
        WelfareMode::Uniform => vec![1.0 / d as f64; d],
        WelfareMode::Dirichlet => normalize_positive(&gammas),
    };

    Ok(Environment {
        d,
        h,
        w,
        det: kappa.into_iter().map(DetectabilitySpec::exponential).collect(),
        harm_resp: vec![HarmResponseSpec::exponential(1.0); d],
        cost: vec![CostSpec::power(config.cost_p); d],
        budget: config.b_factor * d as f64,
        eps_tot: config.eps_tot,
    })
}

fn draw_harm(mode: HarmMode, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match mode {
        HarmMode::Dense => (0..d).map(|_| rng.random_range(0.5..=1.5)).collect(),
        HarmMode::Sparse => {
            // Beta(a, b) as X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b)
            let ga = Gamma::new(0.5, 1.0).expect("valid gamma");
            let gb = Gamma::new(2.0, 1.0).expect("valid gamma");
            (0..d)
                .map(|_| {
                    let x: f64 = ga.sample(rng);
                    let y: f64 = gb.sample(rng);
                    // keep strictly positive so the L1 normalization is defined
                    (x / (x + y)).max(f64::MIN_POSITIVE)
                })
                .collect()
        }
    }
}

/// Normalizes onto the simplex, flooring underflowed Gamma(0.5) draws at the smallest normal.
fn normalize_positive(v: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = v.iter().map(|x| x.max(f64::MIN_POSITIVE)).collect();
    let s: f64 = floored.iter().sum();
    floored.iter().map(|x| x / s).collect()
}

/// Per-dimension standard deviation of `h` over [`UF_PRE_DRAWS`] independent draws of `config`.
pub fn prior_harm_std(config: &SamplingConfig) -> Result<Vec<f64>> {
    let pre = SamplingConfig {
        stream_axis: config.stream_axis ^ UF_AXIS,
        ..config.clone()
    };
    let draws: Vec<Vec<f64>> = (0..UF_PRE_DRAWS as u64)
        .map(|s| sample_environment(&pre, s).map(|e| e.h))
        .collect::<Result<_>>()?;
    let n = draws.len() as f64;
    Ok((0..config.d)
        .map(|j| {
            let mean = draws.iter().map(|h| h[j]).sum::<f64>() / n;
            let var = draws.iter().map(|h| (h[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SamplingConfig {
            welfare_mode: WelfareMode::Dirichlet,
            ..SamplingConfig::default()
        };
        assert_eq!(sample_environment(&cfg, 3).unwrap(), sample_environment(&cfg, 3).unwrap());
        assert_ne!(sample_environment(&cfg, 3).unwrap(), sample_environment(&cfg, 4).unwrap());
    }

    #[test]
    fn dense_raw_components_in_range() {
        for seed in 0..50 {
            let mut rng = stream(1, 2, seed);
            let raw = draw_harm(HarmMode::Dense, 10, &mut rng);
            assert!(raw.iter().all(|x| (0.5..=1.5).contains(x)));
        }
    }

    #[test]
    fn modes_share_other_components() {
        let base = SamplingConfig::default();
        let a = sample_environment(&base, 9).unwrap();
        let b = sample_environment(&SamplingConfig { welfare_mode: WelfareMode::Dirichlet, ..base.clone() }, 9).unwrap();
        let c = sample_environment(&SamplingConfig { eps_tot: 5.0, ..base.clone() }, 9).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.det, b.det);
        assert_eq!(a.h, c.h);
        assert_eq!(a.w, c.w);
    }

    #[test]
    fn homogeneous_kappa_and_budget() {
        let cfg = SamplingConfig {
            kappa_mode: KappaMode::Homogeneous,
            b_factor: 0.5,
            d: 5,
            ..SamplingConfig::default()
        };
        let env = sample_environment(&cfg, 0).unwrap();
        assert!(env.det.iter().all(|s| *s == DetectabilitySpec::exponential(1.0)));
        assert_eq!(env.budget, 2.5);
    }

    #[test]
    fn prior_std_is_positive() {
        let s = prior_harm_std(&SamplingConfig { d: 5, ..SamplingConfig::default() }).unwrap();
        assert_eq!(s.len(), 5);
        // dense components are Uniform[0.5, 1.5] before normalization, sd about 0.29 / 1 scaled
        assert!(s.iter().all(|&x| x > 0.1 && x < 0.5), "{s:?}");
    }

    proptest! {
        #[test]
        fn normalizations_hold(seed in 0u64..10_000, sparse in any::<bool>(), d in prop::sample::select(vec![5usize, 10, 20])) {
            let cfg = SamplingConfig {
                d,
                harm_mode: if sparse { HarmMode::Sparse } else { HarmMode::Dense },
                welfare_mode: WelfareMode::Dirichlet,
                ..SamplingConfig::default()
            };
            let env = sample_environment(&cfg, seed).unwrap();
            let sh: f64 = env.h.iter().sum();
            prop_assert!((sh - d as f64).abs() <= 1e-9);
            let sw: f64 = env.w.iter().sum();
            prop_assert!((sw - 1.0).abs() <= 1e-12);
            prop_assert!(env.w.iter().all(|&x| x > 0.0));
            prop_assert!(env.validate().is_ok());
        }
    }
}
