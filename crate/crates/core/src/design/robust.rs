//! Min-max audit design over a finite set of developer types.

use serde::{Deserialize, Serialize};

use super::hypergrad::gap_under;
use super::spad::{spad_against, OptimTrace, SpadOptions};
use crate::error::{contract, Result};
use crate::lower::DeveloperType;
use crate::model::{AuditPolicy, Environment};

pub const MAX_ROUNDS: usize = 20;
/// Rounds with an unchanged worst-case type after which the alternation stops.
pub const STABLE_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedType {
    pub developer: DeveloperType,
    /// Multiplies this type's gap in the adversary's maximization.
    pub weight: f64,
}

impl WeightedType {
    pub fn new(developer: DeveloperType, weight: f64) -> Self {
        WeightedType { developer, weight }
    }
}

#[derive(Debug, Clone)]
pub struct RobustOutcome {
    pub policy: AuditPolicy,
    /// Index of the worst-case type at the returned policy.
    pub worst_type: usize,
    /// Weighted gap of the worst-case type at the returned policy.
    pub worst_value: f64,
    pub rounds: usize,
    /// Trace of the first round, which is plain optimization against the first type.
    pub trace: OptimTrace,
}

/// Alternates optimization against the current worst-case type with exact enumeration of the
/// adversary's choice, keeping the policy with the smallest worst-case weighted gap seen.
///
/// The first type is treated as the nominal one and optimized against with the full restart
/// budget. Later rounds refine the incumbent with a single restart.
pub fn robust_spad(env: &Environment, types: &[WeightedType], opts: &SpadOptions) -> Result<RobustOutcome> {
    if types.is_empty() {
        return Err(contract("robust design needs at least one developer type"));
    }
    if let Some(t) = types.iter().find(|t| !(t.weight > 0.0)) {
        return Err(contract(format!("type weight {} is not positive", t.weight)));
    }
    let first = spad_against(env, &types[0].developer, opts)?;
    if types.len() == 1 {
        return Ok(RobustOutcome {
            worst_value: types[0].weight * first.bw,
            policy: first.policy,
            worst_type: 0,
            rounds: 1,
            trace: first.trace,
        });
    }

    let (mut worst, worst_value) = adversary(env, types, &first.policy)?;
    let mut best = (first.policy.clone(), worst, worst_value);
    let mut policy = first.policy;
    let mut stable = 0;
    let mut rounds = 1;
    while rounds < MAX_ROUNDS && stable < STABLE_ROUNDS {
        let refine = SpadOptions {
            restarts: 1,
            initial: Some(policy.clone()),
            seed_policies: Vec::new(),
            ..opts.clone()
        };
        policy = spad_against(env, &types[worst].developer, &refine)?.policy;
        rounds += 1;
        let (next, value) = adversary(env, types, &policy)?;
        log::debug!("robust round {rounds}: worst type {next}, value {value:.6}");
        if value < best.2 {
            best = (policy.clone(), next, value);
        }
        stable = if next == worst { stable + 1 } else { 0 };
        worst = next;
    }
    Ok(RobustOutcome {
        policy: best.0,
        worst_type: best.1,
        worst_value: best.2,
        rounds,
        trace: first.trace,
    })
}

/// Worst type by weighted gap, lowest index on ties.
fn adversary(env: &Environment, types: &[WeightedType], policy: &AuditPolicy) -> Result<(usize, f64)> {
    let mut worst = (0, f64::NEG_INFINITY);
    for (i, t) in types.iter().enumerate() {
        let v = t.weight * gap_under(env, policy, &t.developer)?;
        if v > worst.1 {
            worst = (i, v);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::spad;

    fn quick() -> SpadOptions {
        SpadOptions {
            restarts: 2,
            t_max: 40,
            ..SpadOptions::default()
        }
    }

    #[test]
    fn single_type_reduces_to_spad() {
        let env = Environment::worked_example();
        let plain = spad(&env, &quick()).unwrap();
        let robust = robust_spad(&env, &[WeightedType::new(DeveloperType::fully_strategic(), 1.0)], &quick()).unwrap();
        assert_eq!(robust.policy, plain.policy);
        assert_eq!(robust.trace, plain.trace);
        assert_eq!(robust.rounds, 1);
    }

    #[test]
    fn robust_worst_case_no_worse_than_fs_only() {
        let env = Environment::worked_example();
        let types = [
            WeightedType::new(DeveloperType::fully_strategic(), 1.0),
            WeightedType::new(DeveloperType::boundedly_rational(), 1.0),
        ];
        let fs_only = spad(&env, &quick()).unwrap().policy;
        let worst_of = |p: &AuditPolicy| {
            types
                .iter()
                .map(|t| gap_under(&env, p, &t.developer).unwrap())
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let robust = robust_spad(&env, &types, &quick()).unwrap();
        assert!(worst_of(&robust.policy) <= worst_of(&fs_only) + 1e-6);
        assert!((worst_of(&robust.policy) - robust.worst_value).abs() < 1e-12);
    }

    #[test]
    fn empty_type_set_rejected() {
        let env = Environment::worked_example();
        assert!(robust_spad(&env, &[], &quick()).is_err());
    }
}
