use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{AuditPolicy, Environment};

/// Fixed auditor allocation rules that do not anticipate the developer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum BaselineKind {
    /// `pi_j = 1/d`, `eps_j = eps_tot/d`.
    Unif,
    /// Proportional to baseline harm.
    Hp,
    /// Proportional to welfare weight.
    Wp,
    /// Proportional to caller-supplied prior standard deviations of the harms.
    Uf { h_std: Vec<f64> },
    /// Uniform queries with unlimited privacy budget. Reference only, never feasible.
    Orc,
}

impl BaselineKind {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::Unif => "UNIF",
            BaselineKind::Hp => "HP",
            BaselineKind::Wp => "WP",
            BaselineKind::Uf { .. } => "UF",
            BaselineKind::Orc => "ORC",
        }
    }
}

/// Builds the policy of a baseline rule.
pub fn baseline_policy(kind: &BaselineKind, env: &Environment) -> Result<AuditPolicy> {
    env.validate()?;
    let d = env.d;
    match kind {
        BaselineKind::Unif => AuditPolicy::new(vec![1.0 / d as f64; d], vec![env.eps_tot / d as f64; d], env.eps_tot),
        BaselineKind::Hp => proportional(&env.h, env.eps_tot),
        BaselineKind::Wp => proportional(&env.w, env.eps_tot),
        BaselineKind::Uf { h_std } => {
            if h_std.is_empty() {
                return Err(contract("UF baseline needs prior harm standard deviations"));
            }
            env.check_len("h_std", h_std.len())?;
            proportional(h_std, env.eps_tot)
        }
        BaselineKind::Orc => Ok(AuditPolicy::oracle(d)),
    }
}

/// `pi ∝ weights`, `eps ∝ weights` scaled to `eps_tot`.
///
/// Weights are divided by their maximum before normalizing so that equal weights reproduce the
/// uniform rule bit for bit.
pub(crate) fn proportional(weights: &[f64], eps_tot: f64) -> Result<AuditPolicy> {
    let top = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) || weights.iter().any(|&x| !(x >= 0.0)) {
        return Err(contract("proportional allocation needs nonnegative weights with a positive entry"));
    }
    let rel: Vec<f64> = weights.iter().map(|x| x / top).collect();
    let total: f64 = rel.iter().sum();
    let pi = rel.iter().map(|r| r / total).collect();
    let eps = rel.iter().map(|r| eps_tot * r / total).collect();
    AuditPolicy::new(pi, eps, eps_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_on_worked_example() {
        let env = Environment::worked_example();
        let p = baseline_policy(&BaselineKind::Unif, &env).unwrap();
        assert_eq!(p.pi(), &[1.0 / 3.0; 3]);
        assert_eq!(p.eps(), &[1.0; 3]);
    }

    #[test]
    fn harm_proportional() {
        let env = Environment::exponential(vec![1.0, 2.0, 1.0], vec![1.0; 3], vec![1.0; 3], 1.0, 2.0, 1.0, 2.0).unwrap();
        let p = baseline_policy(&BaselineKind::Hp, &env).unwrap();
        for (a, b) in p.pi().iter().zip([0.25, 0.5, 0.25]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        for (a, b) in p.eps().iter().zip([0.5, 1.0, 0.5]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn welfare_proportional_equals_uniform_under_uniform_welfare() {
        for d in [3, 5, 7, 10, 20] {
            let env = Environment::exponential(
                (0..d).map(|j| 0.5 + j as f64 / d as f64).collect(),
                vec![1.0 / d as f64; d],
                vec![1.0; d],
                1.0,
                2.0,
                d as f64,
                0.7,
            )
            .unwrap();
            let wp = baseline_policy(&BaselineKind::Wp, &env).unwrap();
            let unif = baseline_policy(&BaselineKind::Unif, &env).unwrap();
            assert_eq!(wp, unif, "d = {d}");
        }
    }

    #[test]
    fn uf_requires_std() {
        let env = Environment::worked_example();
        assert!(baseline_policy(&BaselineKind::Uf { h_std: vec![] }, &env).is_err());
        let p = baseline_policy(&BaselineKind::Uf { h_std: vec![0.1, 0.3, 0.1] }, &env).unwrap();
        assert_relative_eq!(p.eps()[1], 1.8, epsilon = 1e-12);
    }

    #[test]
    fn oracle_is_flagged() {
        let env = Environment::worked_example();
        let p = baseline_policy(&BaselineKind::Orc, &env).unwrap();
        assert!(p.is_reference_only());
        assert!(p.eps().iter().all(|e| e.is_infinite()));
    }
}
