use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Result};
use crate::special::{norm_cdf, norm_inv};

/// Step used for central differences of the reduced-form curves.
pub const DERIVATIVE_STEP: f64 = 1e-6;

/// Grid used to fit the exponential surrogate to non-Gaussian mechanisms.
pub const FIT_GRID_POINTS: usize = 50;
pub const FIT_GRID_LO: f64 = 0.01;
pub const FIT_GRID_HI: f64 = 10.0;

/// How the audit's sensitivity to residual harm grows with the privacy budget of a dimension.
///
/// Every variant is normalized so that `alpha(0) = 0` and `alpha` increases strictly
/// towards 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DetectabilitySpec {
    /// `alpha(eps) = 1 - exp(-kappa * eps)`.
    Exponential { kappa: f64 },
    /// One-sided z-test on a Gaussian-mechanism release, evaluated at `h_ref`.
    GaussianReduced {
        sensitivity: f64,
        delta_dp: f64,
        level: f64,
        h_ref: f64,
    },
    /// Threshold test against `c_null` on a Laplace-mechanism release.
    LaplaceReduced {
        sensitivity: f64,
        c_null: f64,
        h_ref: f64,
    },
    /// CLT test on `n` aggregated randomized-response answers.
    RandomizedResponseReduced { n: f64, level: f64, h_ref: f64 },
}

impl DetectabilitySpec {
    pub fn exponential(kappa: f64) -> Self {
        DetectabilitySpec::Exponential { kappa }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DetectabilitySpec::Exponential { kappa } => kappa.is_finite() && kappa > 0.0,
            DetectabilitySpec::GaussianReduced {
                sensitivity,
                delta_dp,
                level,
                h_ref,
            } => {
                sensitivity > 0.0
                    && delta_dp > 0.0
                    && delta_dp < 1.0
                    && level > 0.0
                    && level < 1.0
                    && h_ref > 0.0
            }
            DetectabilitySpec::LaplaceReduced {
                sensitivity,
                c_null,
                h_ref,
            } => sensitivity > 0.0 && c_null < h_ref && h_ref.is_finite() && c_null.is_finite(),
            DetectabilitySpec::RandomizedResponseReduced { n, level, h_ref } => {
                n >= 1.0 && level > 0.0 && level < 1.0 && h_ref > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid detectability parameters: {self:?}")))
        }
    }

    /// Noise scale of the Gaussian mechanism at `eps`, `Δ·sqrt(2 ln(1.25/δ)) / eps`.
    pub fn gaussian_sigma(sensitivity: f64, delta_dp: f64, eps: f64) -> f64 {
        sensitivity * (2.0 * (1.25 / delta_dp).ln()).sqrt() / eps
    }

    /// Rescaled detectability. Defined for negative `eps` as the analytic continuation so that
    /// central differences work at the origin.
    fn alpha_raw(&self, eps: f64) -> f64 {
        match *self {
            DetectabilitySpec::Exponential { kappa } => -(-kappa * eps).exp_m1(),
            DetectabilitySpec::GaussianReduced {
                sensitivity,
                delta_dp,
                level,
                h_ref,
            } => {
                let scale = sensitivity * (2.0 * (1.25 / delta_dp).ln()).sqrt();
                let z = norm_inv(1.0 - level);
                let tilde = norm_cdf(eps * h_ref / scale - z);
                (tilde - level) / (1.0 - level)
            }
            DetectabilitySpec::LaplaceReduced {
                sensitivity,
                c_null,
                h_ref,
            } => {
                // 2 * (1 - exp(-x)/2) - 1
                -(-eps * (h_ref - c_null) / sensitivity).exp_m1()
            }
            DetectabilitySpec::RandomizedResponseReduced { n, level, h_ref } => {
                let z = norm_inv(1.0 - level);
                let snr = n.sqrt() * h_ref;
                let tilde = norm_cdf(snr * (eps / 2.0).tanh() - z);
                let sup = norm_cdf(snr - z);
                (tilde - level) / (sup - level)
            }
        }
    }

    /// `(alpha, d alpha / d eps)` at `eps >= 0`.
    pub fn eval(&self, eps: f64) -> Result<(f64, f64)> {
        if eps.is_nan() || eps < 0.0 {
            return Err(domain(format!("privacy budget must be nonnegative, got {eps}")));
        }
        if eps.is_infinite() {
            return Ok((1.0, 0.0));
        }
        let alpha = if eps == 0.0 { 0.0 } else { self.alpha_raw(eps).clamp(0.0, 1.0) };
        let alpha_prime = match *self {
            DetectabilitySpec::Exponential { kappa } => kappa * (-kappa * eps).exp(),
            _ => {
                let h = DERIVATIVE_STEP;
                ((self.alpha_raw(eps + h) - self.alpha_raw(eps - h)) / (2.0 * h)).max(0.0)
            }
        };
        Ok((alpha, alpha_prime))
    }

    /// Detectability only.
    pub fn alpha(&self, eps: f64) -> Result<f64> {
        self.eval(eps).map(|(a, _)| a)
    }

    /// Smallest `eps` with `alpha(eps) >= target`, for `target` in `[0, 1)`.
    pub fn inverse(&self, target: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&target) {
            return Err(domain(format!("detectability target {target} outside [0, 1)")));
        }
        if let DetectabilitySpec::Exponential { kappa } = *self {
            return Ok(-(-target).ln_1p() / kappa);
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        let mut guard = 0;
        while self.alpha_raw(hi) < target {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(domain(format!("detectability never reaches {target}")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.alpha_raw(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// A calibrated reduced-form mechanism and its fitted exponential surrogate rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mechanism: DetectabilitySpec,
    pub kappa_fit: f64,
}

impl Calibration {
    pub fn alpha(&self, eps: f64) -> Result<f64> {
        self.mechanism.alpha(eps)
    }

    /// The exponential surrogate `1 - exp(-kappa_fit * eps)`.
    pub fn surrogate(&self) -> DetectabilitySpec {
        DetectabilitySpec::exponential(self.kappa_fit)
    }
}

/// Calibrates a reduced-form DP mechanism: the rescaled detectability curve and the rate of the
/// exponential family that stands in for it.
///
/// The Gaussian mechanism uses `kappa = h_ref / sigma(eps = 1)`. The other mechanisms have no
/// closed-form rate, so `kappa` is the least-squares fit of `1 - exp(-kappa eps)` on a 50-point
/// grid over `[0.01, 10]`.
pub fn calibrate_mechanism(mechanism: DetectabilitySpec) -> Result<Calibration> {
    mechanism.validate()?;
    let kappa_fit = match mechanism {
        DetectabilitySpec::Exponential { .. } => {
            return Err(contract(
                "calibration applies to reduced-form mechanisms, not the exponential family",
            ))
        }
        DetectabilitySpec::GaussianReduced {
            sensitivity,
            delta_dp,
            h_ref,
            ..
        } => h_ref / DetectabilitySpec::gaussian_sigma(sensitivity, delta_dp, 1.0),
        _ => fit_exponential_rate(&mechanism)?,
    };
    Ok(Calibration {
        mechanism,
        kappa_fit,
    })
}

fn fit_grid() -> Vec<f64> {
    let step = (FIT_GRID_HI - FIT_GRID_LO) / (FIT_GRID_POINTS - 1) as f64;
    (0..FIT_GRID_POINTS)
        .map(|i| FIT_GRID_LO + step * i as f64)
        .collect()
}

/// Sum of squared residuals of the exponential surrogate against `targets` on `grid`.
pub(crate) fn surrogate_sse(kappa: f64, grid: &[f64], targets: &[f64]) -> f64 {
    grid.iter()
        .zip(targets)
        .map(|(&e, &t)| {
            let r = -(-kappa * e).exp_m1() - t;
            r * r
        })
        .sum()
}

fn fit_exponential_rate(mechanism: &DetectabilitySpec) -> Result<f64> {
    let grid = fit_grid();
    let targets = grid
        .iter()
        .map(|&e| mechanism.alpha(e))
        .collect::<Result<Vec<_>>>()?;
    let objective = |u: f64| surrogate_sse(u.exp(), &grid, &targets);

    // coarse log-scan, then golden section around the best cell
    let (lo, hi, n) = ((1e-6f64).ln(), (1e4f64).ln(), 400);
    let du = (hi - lo) / n as f64;
    let best = (0..=n)
        .map(|i| lo + du * i as f64)
        .map(|u| (u, objective(u)))
        .fold((lo, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    let (mut a, mut b) = (best.0 - du, best.0 + du);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = objective(x2);
        }
    }
    Ok((0.5 * (a + b)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian() -> DetectabilitySpec {
        DetectabilitySpec::GaussianReduced {
            sensitivity: 1.0,
            delta_dp: 1e-5,
            level: 0.05,
            h_ref: 1.0,
        }
    }

    fn laplace() -> DetectabilitySpec {
        DetectabilitySpec::LaplaceReduced {
            sensitivity: 1.0,
            c_null: 0.2,
            h_ref: 1.0,
        }
    }

    fn rr() -> DetectabilitySpec {
        DetectabilitySpec::RandomizedResponseReduced {
            n: 25.0,
            level: 0.05,
            h_ref: 0.3,
        }
    }

    #[test]
    fn exponential_worked_value() {
        let (a, _) = DetectabilitySpec::exponential(1.0).eval(1.0).unwrap();
        assert!((a - 0.632).abs() < 5e-4);
    }

    #[test]
    fn exponential_closed_form_and_derivative() {
        let (a, ap) = DetectabilitySpec::exponential(2.0).eval(1.5).unwrap();
        assert_relative_eq!(a, 1.0 - (-3.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(ap, 2.0 * (-3.0f64).exp(), epsilon = 1e-15);
        // independent central difference
        let h = 1e-6_f64;
        let fd = ((-(2.0 * (1.5 - h))).exp() - (-(2.0 * (1.5 + h))).exp()) / (2.0 * h);
        assert_relative_eq!(ap, fd, max_relative = 1e-8);
        assert!((a - 0.95021).abs() < 1e-5 && (ap - 0.09957).abs() < 1e-5);
    }

    #[test]
    fn every_family_vanishes_at_zero() {
        for spec in [DetectabilitySpec::exponential(0.7), gaussian(), laplace(), rr()] {
            assert_eq!(spec.alpha(0.0).unwrap(), 0.0, "{spec:?}");
        }
    }

    #[test]
    fn negative_budget_is_a_domain_error() {
        assert!(DetectabilitySpec::exponential(1.0).eval(-0.1).is_err());
        assert!(gaussian().eval(-1e-9).is_err());
    }

    #[test]
    fn reduced_forms_approach_one() {
        assert!(gaussian().alpha(200.0).unwrap() > 1.0 - 1e-12);
        assert!(laplace().alpha(100.0).unwrap() > 1.0 - 1e-12);
        assert!(rr().alpha(60.0).unwrap() > 1.0 - 1e-12);
        assert_eq!(gaussian().alpha(f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_calibration_rate() {
        let cal = calibrate_mechanism(gaussian()).unwrap();
        let sigma = (2.0 * (1.25e5f64).ln()).sqrt();
        assert!((sigma - 4.845).abs() < 1e-3);
        assert_relative_eq!(cal.kappa_fit, 1.0 / sigma, epsilon = 1e-15);
        assert!((cal.kappa_fit - 0.2064).abs() < 1e-4);
    }

    #[test]
    fn laplace_raw_detectability_is_one_half_at_zero() {
        // raw test power 1 - exp(0)/2 = 1/2, rescaled 2 * 1/2 - 1 = 0
        assert_eq!(laplace().alpha(0.0).unwrap(), 0.0);
    }

    #[test]
    fn laplace_fit_recovers_exact_rate() {
        // the rescaled Laplace curve is exactly exponential with rate (h_ref - c) / sensitivity
        let cal = calibrate_mechanism(laplace()).unwrap();
        assert_relative_eq!(cal.kappa_fit, 0.8, max_relative = 1e-8);
    }

    #[test]
    fn fitted_rate_minimizes_grid_residual() {
        let cal = calibrate_mechanism(rr()).unwrap();
        let grid = fit_grid();
        let targets: Vec<f64> = grid.iter().map(|&e| rr().alpha(e).unwrap()).collect();
        let best = surrogate_sse(cal.kappa_fit, &grid, &targets);
        for f in [0.9, 0.99, 0.999, 1.001, 1.01, 1.1] {
            assert!(surrogate_sse(cal.kappa_fit * f, &grid, &targets) >= best);
        }
    }

    #[test]
    fn calibration_rejects_invalid_parameters() {
        let bad = DetectabilitySpec::GaussianReduced {
            sensitivity: 1.0,
            delta_dp: 1.5,
            level: 0.05,
            h_ref: 1.0,
        };
        assert!(calibrate_mechanism(bad).is_err());
        let bad = DetectabilitySpec::LaplaceReduced {
            sensitivity: 1.0,
            c_null: 2.0,
            h_ref: 1.0,
        };
        assert!(calibrate_mechanism(bad).is_err());
        assert!(calibrate_mechanism(DetectabilitySpec::exponential(1.0)).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        for spec in [DetectabilitySpec::exponential(1.3), gaussian(), laplace(), rr()] {
            for &t in &[0.1, 0.5, 0.9] {
                let e = spec.inverse(t).unwrap();
                assert!((spec.alpha(e).unwrap() - t).abs() < 1e-10, "{spec:?} {t}");
            }
        }
        assert_relative_eq!(
            DetectabilitySpec::exponential(1.0).inverse(0.5).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_spec() -> impl Strategy<Value = DetectabilitySpec> {
            prop_oneof![
                (0.1f64..2.0).prop_map(DetectabilitySpec::exponential),
                (0.2f64..3.0, 1e-8f64..0.1, 0.01f64..0.2, 0.1f64..3.0).prop_map(
                    |(sensitivity, delta_dp, level, h_ref)| DetectabilitySpec::GaussianReduced {
                        sensitivity,
                        delta_dp,
                        level,
                        h_ref
                    }
                ),
                (0.2f64..3.0, -1.0f64..0.5, 0.6f64..2.0).prop_map(|(sensitivity, c_null, h_ref)| {
                    DetectabilitySpec::LaplaceReduced {
                        sensitivity,
                        c_null,
                        h_ref,
                    }
                }),
                (1.0f64..200.0, 0.01f64..0.2, 0.1f64..2.0)
                    .prop_map(|(n, level, h_ref)| DetectabilitySpec::RandomizedResponseReduced {
                        n,
                        level,
                        h_ref
                    }),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn strictly_increasing(spec in any_spec(), a in 0.0f64..3.0, gap in 1e-3f64..2.0) {
                let lo = spec.alpha(a).unwrap();
                let hi = spec.alpha(a + gap).unwrap();
                // strict until the curve saturates at 1 in double precision
                prop_assert!(lo < hi || (lo == 1.0 && hi == 1.0), "{:?}: alpha({}) = {} !< alpha({}) = {}", spec, a, lo, a + gap, hi);
                prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
            }

            #[test]
            fn exponential_derivative_matches_central_difference(kappa in 0.1f64..2.0, eps in 0.0f64..5.0) {
                let spec = DetectabilitySpec::exponential(kappa);
                let (_, ap) = spec.eval(eps).unwrap();
                let h = 1e-6;
                let f = |e: f64| 1.0 - (-kappa * e).exp();
                let fd = (f(eps + h) - f(eps - h)) / (2.0 * h);
                prop_assert!((ap - fd).abs() <= 1e-5 * ap.abs());
            }
        }
    }
}
