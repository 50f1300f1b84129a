//! The audit game: harm dimensions, the auditor's committed policy, and the quantities the
//! auditor cares about (detected harm, true residual harm, and the welfare-weighted
//! under-detection gap).
//!
//! Environments serialize to JSON:
//!
//! ```json
//! {
//!   "d": 2,
//!   "h": [1.0, 1.0],
//!   "w": [2.0, 1.0],
//!   "det": [{"family": "exponential", "kappa": 1.0},
//!           {"family": "gaussian_reduced", "sensitivity": 1.0, "delta_dp": 1e-5, "level": 0.05, "h_ref": 1.0}],
//!   "harm_resp": [{"family": "exponential_decay", "beta": 1.0},
//!                 {"family": "linear_clamp", "gamma": 2.0}],
//!   "cost": [{"family": "power_law", "p": 2.0}, {"family": "power_law", "p": 2.0}],
//!   "B": 1.0,
//!   "eps_tot": 2.0
//! }
//! ```
//!
//! Other detectability families are `laplace_reduced` (`sensitivity`, `c_null`, `h_ref`) and
//! `randomized_response_reduced` (`n`, `level`, `h_ref`). Policies are `{"pi": [...], "eps": [...]}`.

mod cost;
mod detectability;
mod harm;

pub use cost::{CostSpec, CURVATURE_CAP};
pub use detectability::{
    calibrate_mechanism, Calibration, DetectabilitySpec, DERIVATIVE_STEP, FIT_GRID_HI,
    FIT_GRID_LO, FIT_GRID_POINTS,
};
pub use harm::HarmResponseSpec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Result};

/// Tolerance for the simplex and privacy-budget constraints of a policy.
pub const POLICY_TOL: f64 = 1e-9;

/// One instance of the audit game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub d: usize,
    pub h: Vec<f64>,
    pub w: Vec<f64>,
    pub det: Vec<DetectabilitySpec>,
    pub harm_resp: Vec<HarmResponseSpec>,
    pub cost: Vec<CostSpec>,
    /// Developer cost budget.
    #[serde(rename = "B")]
    pub budget: f64,
    pub eps_tot: f64,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 {
            return Err(contract("environment needs at least one dimension"));
        }
        let lens = [
            self.h.len(),
            self.w.len(),
            self.det.len(),
            self.harm_resp.len(),
            self.cost.len(),
        ];
        if lens.iter().any(|&l| l != d) {
            return Err(contract(format!("all vectors must have length d = {d}, got {lens:?}")));
        }
        if self.h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(domain("baseline harms must be positive"));
        }
        if self.w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(domain("welfare weights must be positive"));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(domain("developer budget must be positive"));
        }
        if !(self.eps_tot > 0.0) {
            return Err(domain("total privacy budget must be positive"));
        }
        for s in &self.det {
            s.validate()?;
        }
        for s in &self.harm_resp {
            s.validate()?;
        }
        for s in &self.cost {
            s.validate()?;
        }
        Ok(())
    }

    /// Exponential detectability, exponential harm decay and power-law costs in every dimension.
    pub fn exponential(
        h: Vec<f64>,
        w: Vec<f64>,
        kappa: Vec<f64>,
        beta: f64,
        p: f64,
        budget: f64,
        eps_tot: f64,
    ) -> Result<Self> {
        let d = h.len();
        let env = Environment {
            d,
            det: kappa.into_iter().map(DetectabilitySpec::exponential).collect(),
            harm_resp: vec![HarmResponseSpec::exponential(beta); d],
            cost: vec![CostSpec::power(p); d],
            h,
            w,
            budget,
            eps_tot,
        };
        env.validate()?;
        Ok(env)
    }

    /// The three-dimension worked example: `h = (1,1,1)`, `w = (3,1,1)`, unit rates,
    /// quadratic costs, `B = 1.5`, `eps_tot = 3`.
    pub fn worked_example() -> Self {
        Environment::exponential(
            vec![1.0; 3],
            vec![3.0, 1.0, 1.0],
            vec![1.0; 3],
            1.0,
            2.0,
            1.5,
            3.0,
        )
        .expect("worked example is valid")
    }

    pub fn total_cost(&self, m: &[f64]) -> f64 {
        self.cost.iter().zip(m).map(|(c, &x)| c.value(x)).sum()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(s)?;
        env.validate()?;
        Ok(env)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub(crate) fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len == self.d {
            Ok(())
        } else {
            Err(contract(format!("{what} has length {len}, environment has d = {}", self.d)))
        }
    }
}

/// The auditor's commitment: a query distribution and a per-dimension privacy budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPolicy {
    pi: Vec<f64>,
    eps: Vec<f64>,
    /// Set for the infinite-budget oracle reference, which is not a feasible policy.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    reference_only: bool,
}

impl AuditPolicy {
    /// Checked constructor. Entries down to `-1e-12` are clamped to zero.
    pub fn new(pi: Vec<f64>, eps: Vec<f64>, eps_tot: f64) -> Result<Self> {
        if pi.len() != eps.len() || pi.is_empty() {
            return Err(contract(format!(
                "policy vectors must be non-empty and equal length ({} vs {})",
                pi.len(),
                eps.len()
            )));
        }
        let clamp = |v: Vec<f64>, name: &str| -> Result<Vec<f64>> {
            v.into_iter()
                .map(|x| {
                    if x.is_nan() || x < -1e-12 {
                        Err(domain(format!("{name} entry {x} is negative")))
                    } else {
                        Ok(x.max(0.0))
                    }
                })
                .collect()
        };
        let pi = clamp(pi, "pi")?;
        let eps = clamp(eps, "eps")?;
        let mass: f64 = pi.iter().sum();
        if (mass - 1.0).abs() > POLICY_TOL {
            return Err(domain(format!("query policy sums to {mass}, not 1")));
        }
        let spent: f64 = eps.iter().sum();
        if spent > eps_tot + POLICY_TOL {
            return Err(domain(format!("privacy allocation {spent} exceeds budget {eps_tot}")));
        }
        Ok(AuditPolicy {
            pi,
            eps,
            reference_only: false,
        })
    }

    /// Infinite-budget oracle: uniform queries, every detectability at 1.
    pub fn oracle(d: usize) -> Self {
        AuditPolicy {
            pi: vec![1.0 / d as f64; d],
            eps: vec![f64::INFINITY; d],
            reference_only: true,
        }
    }

    /// No feasibility checks; used for perturbations inside finite differences.
    pub(crate) fn unchecked(pi: Vec<f64>, eps: Vec<f64>) -> Self {
        AuditPolicy {
            pi,
            eps,
            reference_only: false,
        }
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn is_reference_only(&self) -> bool {
        self.reference_only
    }

    /// Re-checks the invariants after deserialization.
    pub fn validated(self, env: &Environment) -> Result<Self> {
        env.check_len("policy", self.len())?;
        if self.reference_only {
            return Ok(self);
        }
        AuditPolicy::new(self.pi, self.eps, env.eps_tot)
    }

    pub fn from_json_str(s: &str, env: &Environment) -> Result<Self> {
        let p: AuditPolicy = serde_json::from_str(s)?;
        p.validated(env)
    }

    /// Sup-norm distance between the two policies' stacked `(pi, eps)` vectors.
    pub fn distance(&self, other: &AuditPolicy) -> f64 {
        self.pi
            .iter()
            .zip(&other.pi)
            .chain(self.eps.iter().zip(&other.eps))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Effective detectability `delta_j = pi_j * alpha_j(eps_j)` together with `alpha` and `alpha'`.
#[derive(Debug, Clone)]
pub(crate) struct Exposure {
    pub alpha: Vec<f64>,
    pub alpha_prime: Vec<f64>,
    pub delta: Vec<f64>,
}

pub(crate) fn exposure(env: &Environment, policy: &AuditPolicy) -> Result<Exposure> {
    env.check_len("policy", policy.len())?;
    let mut alpha = Vec::with_capacity(env.d);
    let mut alpha_prime = Vec::with_capacity(env.d);
    for (spec, &e) in env.det.iter().zip(&policy.eps) {
        let (a, ap) = spec.eval(e)?;
        alpha.push(a);
        alpha_prime.push(ap);
    }
    let delta = policy.pi.iter().zip(&alpha).map(|(p, a)| p * a).collect();
    Ok(Exposure {
        alpha,
        alpha_prime,
        delta,
    })
}

/// Detected harm, true residual harm and the welfare-weighted under-detection gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditMetrics {
    #[serde(rename = "DH")]
    pub dh: f64,
    #[serde(rename = "TRH")]
    pub trh: f64,
    #[serde(rename = "B_w")]
    pub bw: f64,
    pub delta: Vec<f64>,
}

impl AuditMetrics {
    /// `B_w / TRH`.
    pub fn relative_gap(&self) -> f64 {
        if self.trh > 0.0 {
            self.bw / self.trh
        } else {
            0.0
        }
    }
}

/// Evaluates the audit metrics of `policy` against the mitigation `m`.
pub fn compute_metrics(env: &Environment, policy: &AuditPolicy, m: &[f64]) -> Result<AuditMetrics> {
    env.check_len("mitigation", m.len())?;
    if m.iter().any(|&x| x.is_nan() || x < 0.0) {
        return Err(domain("mitigation must be nonnegative"));
    }
    let Exposure { delta, .. } = exposure(env, policy)?;
    Ok(metrics_from_delta(env, &delta, m))
}

pub(crate) fn metrics_from_delta(env: &Environment, delta: &[f64], m: &[f64]) -> AuditMetrics {
    let (mut dh, mut trh, mut bw) = (0.0, 0.0, 0.0);
    for j in 0..env.d {
        let (g, _, _) = env.harm_resp[j].eval(env.h[j], m[j]);
        dh += delta[j] * g;
        trh += env.w[j] * g;
        bw += env.w[j] * (1.0 - delta[j]) * g;
    }
    AuditMetrics {
        dh,
        trh,
        bw,
        delta: delta.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_worked() -> AuditPolicy {
        AuditPolicy::new(vec![1.0 / 3.0; 3], vec![1.0; 3], 3.0).unwrap()
    }

    #[test]
    fn worked_example_uniform_metrics() {
        let env = Environment::worked_example();
        let m = compute_metrics(&env, &uniform_worked(), &[0.177; 3]).unwrap();
        assert!((m.dh - 0.530).abs() < 5e-3, "{m:?}");
        assert!((m.trh - 4.191).abs() < 5e-3, "{m:?}");
        assert!((m.bw - 3.308).abs() < 5e-3, "{m:?}");
    }

    #[test]
    fn worked_example_welfare_aware_metrics() {
        let env = Environment::worked_example();
        let policy = AuditPolicy::new(vec![0.6, 0.2, 0.2], vec![2.4, 0.3, 0.3], 3.0).unwrap();
        let m = compute_metrics(&env, &policy, &[0.375, 0.049, 0.049]).unwrap();
        assert!((m.bw - 2.742).abs() < 5e-3, "{m:?}");
        assert!((m.trh - 3.966).abs() < 5e-3, "{m:?}");
    }

    #[test]
    fn no_mitigation_leaves_full_harm() {
        let env = Environment::worked_example();
        let m = compute_metrics(&env, &uniform_worked(), &[0.0; 3]).unwrap();
        assert_eq!(m.trh, 5.0);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let env = Environment::worked_example();
        let err = compute_metrics(&env, &uniform_worked(), &[0.1, 0.1]).unwrap_err();
        assert!(matches!(err, crate::AuditError::Contract(_)));
    }

    #[test]
    fn policy_constructor_enforces_invariants() {
        assert!(AuditPolicy::new(vec![0.5, 0.6], vec![0.0, 0.0], 1.0).is_err());
        assert!(AuditPolicy::new(vec![0.5, 0.5], vec![0.6, 0.6], 1.0).is_err());
        assert!(AuditPolicy::new(vec![1.0, -0.1], vec![0.0, 0.0], 1.0).is_err());
        let p = AuditPolicy::new(vec![1.0, -1e-13], vec![0.5, -1e-13], 1.0).unwrap();
        assert_eq!(p.pi(), &[1.0, 0.0]);
        assert_eq!(p.eps(), &[0.5, 0.0]);
    }

    #[test]
    fn oracle_has_full_detectability() {
        let env = Environment::worked_example();
        let m = compute_metrics(&env, &AuditPolicy::oracle(3), &[0.0; 3]).unwrap();
        assert!(m.delta.iter().all(|&d| (d - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn json_round_trip_mixed_families() {
        let env = Environment {
            d: 4,
            h: vec![0.1, 1.0 / 3.0, 2.5, 1e-7],
            w: vec![0.2, 0.3, 0.4, 0.1],
            det: vec![
                DetectabilitySpec::exponential(0.123_456_789_012_345_67),
                DetectabilitySpec::GaussianReduced {
                    sensitivity: 1.0,
                    delta_dp: 1e-5,
                    level: 0.05,
                    h_ref: 1.0,
                },
                DetectabilitySpec::LaplaceReduced {
                    sensitivity: 0.5,
                    c_null: -0.1,
                    h_ref: 0.7,
                },
                DetectabilitySpec::RandomizedResponseReduced {
                    n: 100.0,
                    level: 0.01,
                    h_ref: 0.2,
                },
            ],
            harm_resp: vec![
                HarmResponseSpec::exponential(1.0),
                HarmResponseSpec::LinearClamp { gamma: 2.0 },
                HarmResponseSpec::exponential(0.5),
                HarmResponseSpec::exponential(3.0),
            ],
            cost: vec![CostSpec::power(1.5), CostSpec::quadratic(), CostSpec::power(3.0), CostSpec::quadratic()],
            budget: std::f64::consts::PI,
            eps_tot: 0.1,
        };
        let text = env.to_json_string().unwrap();
        assert!(text.contains("\"family\": \"exponential\""));
        assert!(text.contains("\"B\""));
        let back = Environment::from_json_str(&text).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn json_rejects_invalid_environment() {
        let bad = r#"{"d":2,"h":[1,1],"w":[1],"det":[{"family":"exponential","kappa":1},{"family":"exponential","kappa":1}],
            "harm_resp":[{"family":"exponential_decay","beta":1},{"family":"exponential_decay","beta":1}],
            "cost":[{"family":"power_law","p":2},{"family":"power_law","p":2}],"B":1,"eps_tot":1}"#;
        assert!(Environment::from_json_str(bad).is_err());
    }

    proptest! {
        #[test]
        fn gap_identity_and_bounds(
            h in proptest::collection::vec(0.1f64..2.0, 4),
            w in proptest::collection::vec(0.01f64..3.0, 4),
            raw_pi in proptest::collection::vec(0.0f64..1.0, 4),
            eps in proptest::collection::vec(0.0f64..2.0, 4),
            m in proptest::collection::vec(0.0f64..3.0, 4),
        ) {
            let env = Environment::exponential(h, w, vec![0.3, 0.9, 1.4, 2.0], 1.0, 2.0, 5.0, 8.0).unwrap();
            let s: f64 = raw_pi.iter().sum::<f64>() + 1e-9;
            let mut pi: Vec<f64> = raw_pi.iter().map(|x| x / s).collect();
            let fix = 1.0 - pi.iter().sum::<f64>();
            pi[0] += fix;
            let policy = AuditPolicy::new(pi, eps, 8.0).unwrap();
            let met = compute_metrics(&env, &policy, &m).unwrap();
            let covered: f64 = (0..4)
                .map(|j| env.w[j] * met.delta[j] * env.harm_resp[j].eval(env.h[j], m[j]).0)
                .sum();
            prop_assert!((met.bw - (met.trh - covered)).abs() <= 1e-12 * met.trh.max(1.0));
            prop_assert!(met.dh >= 0.0);
            prop_assert!(met.bw >= 0.0 && met.bw <= met.trh);
        }
    }
}
