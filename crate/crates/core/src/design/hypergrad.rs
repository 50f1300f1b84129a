//! Gradients of the welfare-weighted under-detection gap through the developer's best response.
//!
//! The analytic route differentiates the developer's first-order conditions
//! `F_j = delta_j g_j'(m_j) + (1 + lambda) c_j'(m_j) = 0`. With a slack budget the Jacobian in
//! `m` is diagonal with entries `D_j = delta_j g_j'' + (1 + lambda) c_j''`; with a binding budget
//! the system is bordered by the budget row `sum_j c_j'(m_j) dm_j = 0` and solved by LU. The
//! indirect term is then assembled with the adjoint vector `z = K^-T (dB_w/dm, 0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::lower::{best_response, solve_fs, solve_fs_warm, BestResponse, DeveloperType, DEFAULT_FS_TOL};
use crate::model::{exposure, metrics_from_delta, AuditPolicy, Environment};

/// Mitigation below this level counts as sitting on the active-set boundary.
pub const BOUNDARY_TOL: f64 = 1e-8;
pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HypergradMode {
    #[default]
    Analytic,
    /// Forward differences, re-solving the developer problem for each of the `2d` perturbations.
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergradient {
    pub grad_pi: Vec<f64>,
    pub grad_eps: Vec<f64>,
    /// Set when the analytic route was abandoned for finite differences.
    pub fell_back: bool,
}

impl Hypergradient {
    pub fn norm(&self) -> f64 {
        self.grad_pi
            .iter()
            .chain(&self.grad_eps)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// `B_w` at the response of `dev` to `policy`.
pub fn gap_under(env: &Environment, policy: &AuditPolicy, dev: &DeveloperType) -> Result<f64> {
    let br = best_response(env, policy, dev)?;
    let delta = exposure(env, policy)?.delta;
    Ok(metrics_from_delta(env, &delta, &br.m).bw)
}

/// Hypergradient of `B_w` with respect to `(pi, eps)` against a fully strategic developer.
pub fn hypergradient(env: &Environment, policy: &AuditPolicy, mode: HypergradMode) -> Result<Hypergradient> {
    let br = solve_fs(env, policy, DEFAULT_FS_TOL)?;
    hypergradient_at(env, policy, &br, mode)
}

/// As [`hypergradient`], reusing an already computed fully strategic response.
pub fn hypergradient_at(
    env: &Environment,
    policy: &AuditPolicy,
    br: &BestResponse,
    mode: HypergradMode,
) -> Result<Hypergradient> {
    match mode {
        HypergradMode::FiniteDifference { step } => fd_fs(env, policy, br, step),
        HypergradMode::Analytic => {
            if br.m.iter().any(|&m| m <= BOUNDARY_TOL) {
                log::warn!("best response on the active-set boundary; using finite differences");
                let mut g = fd_fs(env, policy, br, DEFAULT_FD_STEP)?;
                g.fell_back = true;
                return Ok(g);
            }
            analytic(env, policy, br)
        }
    }
}

fn analytic(env: &Environment, policy: &AuditPolicy, br: &BestResponse) -> Result<Hypergradient> {
    let d = env.d;
    let ex = exposure(env, policy)?;
    let scale = 1.0 + br.lambda;
    let binding = br.lambda > 0.0;

    let mut direct_pi = vec![0.0; d];
    let mut direct_eps = vec![0.0; d];
    // dF_j/dpi_j and dF_j/deps_j
    let mut r_pi = vec![0.0; d];
    let mut r_eps = vec![0.0; d];
    // dB_w/dm_j
    let mut u = vec![0.0; d];
    let mut curvature = vec![0.0; d];
    let mut marginal_cost = vec![0.0; d];
    let mut fixed = vec![false; d];

    for j in 0..d {
        let (h, harm, cost) = (env.h[j], env.harm_resp[j], env.cost[j]);
        let m = br.m[j];
        let (g, g1, g2) = harm.eval(h, m);
        let (_, c1, c2) = cost.eval(m);
        let (pi, alpha, alpha_prime, delta) = (policy.pi()[j], ex.alpha[j], ex.alpha_prime[j], ex.delta[j]);
        direct_pi[j] = -env.w[j] * alpha * g;
        direct_eps[j] = -env.w[j] * pi * alpha_prime * g;
        u[j] = env.w[j] * (1.0 - delta) * g1;
        marginal_cost[j] = c1;
        // a clamp sitting on its kink does not move under small perturbations
        fixed[j] = harm.kink(h).is_some_and(|k| m >= k);
        if !fixed[j] {
            r_pi[j] = alpha * g1;
            r_eps[j] = pi * alpha_prime * g1;
            curvature[j] = delta * g2 + scale * c2;
        }
    }

    // adjoint z solves K^T z = (u, 0); K is symmetric
    let z: Vec<f64> = if binding {
        let mut k = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut rhs = DVector::<f64>::zeros(d + 1);
        for j in 0..d {
            if fixed[j] {
                k[(j, j)] = 1.0;
            } else {
                k[(j, j)] = curvature[j];
                k[(j, d)] = marginal_cost[j];
                k[(d, j)] = marginal_cost[j];
                rhs[j] = u[j];
            }
        }
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| contract("bordered KKT system is singular"))?;
        sol.iter().take(d).copied().collect()
    } else {
        (0..d)
            .map(|j| if fixed[j] { 0.0 } else { u[j] / curvature[j] })
            .collect()
    };

    let grad_pi = (0..d).map(|j| direct_pi[j] - z[j] * r_pi[j]).collect();
    let grad_eps = (0..d).map(|j| direct_eps[j] - z[j] * r_eps[j]).collect();
    Ok(Hypergradient {
        grad_pi,
        grad_eps,
        fell_back: false,
    })
}

fn fd_fs(env: &Environment, policy: &AuditPolicy, br: &BestResponse, step: f64) -> Result<Hypergradient> {
    let eval = |p: &AuditPolicy| -> Result<f64> {
        let r = solve_fs_warm(env, p, DEFAULT_FS_TOL, Some(br))?;
        let delta = exposure(env, p)?.delta;
        Ok(metrics_from_delta(env, &delta, &r.m).bw)
    };
    let base = metrics_from_delta(env, &exposure(env, policy)?.delta, &br.m).bw;
    forward_differences(policy, step, base, eval)
}

/// Forward-difference hypergradient against any developer type.
pub fn fd_hypergradient(env: &Environment, policy: &AuditPolicy, dev: &DeveloperType, step: f64) -> Result<Hypergradient> {
    let base = gap_under(env, policy, dev)?;
    forward_differences(policy, step, base, |p| gap_under(env, p, dev))
}

fn forward_differences(
    policy: &AuditPolicy,
    step: f64,
    base: f64,
    eval: impl Fn(&AuditPolicy) -> Result<f64>,
) -> Result<Hypergradient> {
    if !(step > 0.0) {
        return Err(contract("finite-difference step must be positive"));
    }
    let d = policy.len();
    let mut grad_pi = vec![0.0; d];
    let mut grad_eps = vec![0.0; d];
    for j in 0..d {
        let mut pi = policy.pi().to_vec();
        pi[j] += step;
        grad_pi[j] = (eval(&AuditPolicy::unchecked(pi, policy.eps().to_vec()))? - base) / step;
        let mut eps = policy.eps().to_vec();
        eps[j] += step;
        grad_eps[j] = (eval(&AuditPolicy::unchecked(policy.pi().to_vec(), eps))? - base) / step;
    }
    Ok(Hypergradient {
        grad_pi,
        grad_eps,
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{baseline_policy, BaselineKind};

    /// Independent oracle: central differences of B_w through fresh FS solves.
    fn central(env: &Environment, policy: &AuditPolicy, step: f64) -> (Vec<f64>, Vec<f64>) {
        let dev = DeveloperType::fully_strategic();
        let f = |pi: Vec<f64>, eps: Vec<f64>| gap_under(env, &AuditPolicy::unchecked(pi, eps), &dev).unwrap();
        let d = env.d;
        let mut gp = vec![0.0; d];
        let mut ge = vec![0.0; d];
        for j in 0..d {
            let (mut a, mut b) = (policy.pi().to_vec(), policy.pi().to_vec());
            a[j] += step;
            b[j] -= step;
            gp[j] = (f(a, policy.eps().to_vec()) - f(b, policy.eps().to_vec())) / (2.0 * step);
            let (mut a, mut b) = (policy.eps().to_vec(), policy.eps().to_vec());
            a[j] += step;
            b[j] -= step;
            ge[j] = (f(policy.pi().to_vec(), a) - f(policy.pi().to_vec(), b)) / (2.0 * step);
        }
        (gp, ge)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn analytic_matches_central_differences_on_worked_example() {
        let env = Environment::worked_example();
        let policy = baseline_policy(&BaselineKind::Unif, &env).unwrap();
        let g = hypergradient(&env, &policy, HypergradMode::Analytic).unwrap();
        assert!(!g.fell_back);
        let (gp, ge) = central(&env, &policy, 1e-5);
        for j in 0..3 {
            assert!(rel(g.grad_pi[j], gp[j]) <= 1e-4, "pi {j}: {} vs {}", g.grad_pi[j], gp[j]);
            assert!(rel(g.grad_eps[j], ge[j]) <= 1e-4, "eps {j}: {} vs {}", g.grad_eps[j], ge[j]);
        }
    }

    #[test]
    fn analytic_matches_central_differences_with_binding_budget() {
        let mut env = Environment::worked_example();
        env.budget = 0.01;
        let policy = AuditPolicy::new(vec![0.5, 0.3, 0.2], vec![1.5, 1.0, 0.5], 3.0).unwrap();
        let br = solve_fs(&env, &policy, 1e-6).unwrap();
        assert!(br.lambda > 0.0);
        let g = hypergradient_at(&env, &policy, &br, HypergradMode::Analytic).unwrap();
        let (gp, ge) = central(&env, &policy, 1e-5);
        for j in 0..3 {
            assert!(rel(g.grad_pi[j], gp[j]) <= 1e-4, "pi {j}: {} vs {}", g.grad_pi[j], gp[j]);
            assert!(rel(g.grad_eps[j], ge[j]) <= 1e-4, "eps {j}: {} vs {}", g.grad_eps[j], ge[j]);
        }
    }

    #[test]
    fn zero_query_mass_has_zero_budget_gradient() {
        let env = Environment::worked_example();
        let policy = AuditPolicy::new(vec![0.0, 0.5, 0.5], vec![1.0, 1.0, 1.0], 3.0).unwrap();
        for mode in [HypergradMode::Analytic, HypergradMode::FiniteDifference { step: 1e-3 }] {
            let g = hypergradient(&env, &policy, mode).unwrap();
            assert_eq!(g.grad_eps[0], 0.0, "{mode:?}");
        }
    }

    #[test]
    fn boundary_falls_back_to_finite_differences() {
        let env = Environment::worked_example();
        let policy = AuditPolicy::new(vec![0.0, 0.5, 0.5], vec![1.0, 1.0, 1.0], 3.0).unwrap();
        let g = hypergradient(&env, &policy, HypergradMode::Analytic).unwrap();
        assert!(g.fell_back);
    }

    #[test]
    fn single_dimension_budget_gradient_is_negative() {
        let env = Environment::exponential(vec![1.0], vec![1.0], vec![1.0], 1.0, 2.0, 100.0, 1.0).unwrap();
        let policy = AuditPolicy::new(vec![1.0], vec![1.0], 1.0).unwrap();
        let g = hypergradient(&env, &policy, HypergradMode::Analytic).unwrap();
        let (_, ge) = central(&env, &policy, 1e-5);
        assert!(g.grad_eps[0] < 0.0 && ge[0] < 0.0);
        assert!(rel(g.grad_eps[0], ge[0]) <= 1e-6);
    }

    #[test]
    fn forward_differences_track_analytic() {
        let env = Environment::worked_example();
        let policy = AuditPolicy::new(vec![0.6, 0.2, 0.2], vec![2.4, 0.3, 0.3], 3.0).unwrap();
        let a = hypergradient(&env, &policy, HypergradMode::Analytic).unwrap();
        let f = hypergradient(&env, &policy, HypergradMode::FiniteDifference { step: 1e-6 }).unwrap();
        for j in 0..3 {
            assert!((a.grad_pi[j] - f.grad_pi[j]).abs() < 1e-4);
            assert!((a.grad_eps[j] - f.grad_eps[j]).abs() < 1e-4);
        }
    }
}
