//! Developer best responses to a committed audit policy.
//!
//! The developer minimizes detectability-weighted residual harm plus mitigation cost,
//! `sum_j delta_j g_j(m_j) + C(m)`, subject to `C(m) <= B` and `m >= 0`. The problem is
//! separable apart from the single budget row, so the fully strategic solver dualizes the budget
//! and finds the multiplier by a safeguarded Newton/bisection search, solving each dimension's
//! first-order condition `delta_j |g_j'(m)| = (1 + lambda) c_j'(m)` in turn.

use serde::{Deserialize, Serialize};

use crate::error::{contract, AuditError, Result};
use crate::model::{exposure, AuditPolicy, Environment};

pub const DEFAULT_FS_TOL: f64 = 1e-6;
pub const DEFAULT_BR_STEPS: usize = 50;
pub const DEFAULT_BR_ETA: f64 = 0.05;

const MAX_DUAL_STEPS: usize = 200;
const MAX_SCALAR_STEPS: usize = 200;
const ARMIJO_CONTRACTION: f64 = 0.5;
const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_MAX_HALVINGS: usize = 30;
const BR_STATIONARITY_TOL: f64 = 1e-6;

/// A developer's mitigation choice with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub m: Vec<f64>,
    /// Budget multiplier. Always zero for responses that do not come from the KKT solver.
    pub lambda: f64,
    /// `sum_j delta_j g_j + C(m)`.
    pub objective: f64,
    pub cost_used: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// How the developer reacts to the audit interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeveloperType {
    /// Solves the lower-level problem exactly.
    FullyStrategic { tol: f64 },
    /// `k` projected-gradient steps with Armijo backtracking from `(B/d) 1`.
    BoundedlyRational { k: usize, eta: f64 },
    /// Budget-exhausting mitigation proportional to `w_j h_j`.
    NonStrategic,
}

impl DeveloperType {
    pub fn fully_strategic() -> Self {
        DeveloperType::FullyStrategic {
            tol: DEFAULT_FS_TOL,
        }
    }

    pub fn boundedly_rational() -> Self {
        DeveloperType::BoundedlyRational {
            k: DEFAULT_BR_STEPS,
            eta: DEFAULT_BR_ETA,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DeveloperType::FullyStrategic { .. } => "FS",
            DeveloperType::BoundedlyRational { .. } => "BR",
            DeveloperType::NonStrategic => "NS",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DeveloperType::FullyStrategic { tol } if !(tol > 0.0) => {
                Err(contract("FS tolerance must be positive"))
            }
            DeveloperType::BoundedlyRational { eta, .. } if !(eta > 0.0) => {
                Err(contract("BR step size must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Dispatches to the solver for `dev`.
pub fn best_response(env: &Environment, policy: &AuditPolicy, dev: &DeveloperType) -> Result<BestResponse> {
    dev.validate()?;
    match *dev {
        DeveloperType::FullyStrategic { tol } => solve_fs(env, policy, tol),
        DeveloperType::BoundedlyRational { k, eta } => solve_br(env, policy, k, eta),
        DeveloperType::NonStrategic => {
            let m = solve_ns(env)?;
            let delta = exposure(env, policy)?.delta;
            Ok(describe(env, &delta, m, 0.0, true, 0))
        }
    }
}

/// Per-dimension data frozen for one best-response solve.
struct Problem<'a> {
    env: &'a Environment,
    delta: Vec<f64>,
}

impl Problem<'_> {
    /// Minimizer of `delta g(m) + (1 + lambda) c(m)` over `m >= 0`, plus `dm/dlambda`.
    fn dimension(&self, j: usize, lambda: f64, guess: Option<f64>) -> (f64, f64) {
        let env = self.env;
        let delta = self.delta[j];
        let (h, harm, cost) = (env.h[j], env.harm_resp[j], env.cost[j]);
        if delta <= 0.0 {
            return (0.0, 0.0);
        }
        let scale = 1.0 + lambda;
        if let Some(kink) = harm.kink(h) {
            // linear clamp: the marginal benefit is constant up to the kink
            let free = cost.marginal_inverse(delta * harm.initial_slope(h) / scale);
            if free >= kink {
                return (kink, 0.0);
            }
            let (_, c1, c2) = cost.eval(free);
            return (free, -c1 / (scale * c2));
        }

        let foc = |m: f64| {
            let (_, g1, g2) = harm.eval(h, m);
            let (_, c1, c2) = cost.eval(m);
            (-delta * g1 - scale * c1, delta * g2 + scale * c2)
        };
        let mut lo = 0.0;
        let mut hi = cost.marginal_inverse(delta * harm.initial_slope(h) / scale);
        if hi <= 0.0 {
            return (0.0, 0.0);
        }
        let mut x = guess.filter(|g| *g > lo && *g < hi).unwrap_or(0.5 * hi);
        for _ in 0..MAX_SCALAR_STEPS {
            let (f, slope) = foc(x);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x + f / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let moved = (next - x).abs();
            x = next;
            if moved <= 1e-16 * x.max(1e-300) || hi - lo <= 1e-16 * hi {
                break;
            }
        }
        let (_, _, c2) = cost.eval(x);
        let (_, _, g2) = harm.eval(h, x);
        let (_, c1, _) = cost.eval(x);
        (x, -c1 / (delta * g2 + scale * c2))
    }

    fn solve_at(&self, lambda: f64, guess: Option<&[f64]>) -> (Vec<f64>, f64, f64) {
        let mut m = Vec::with_capacity(self.env.d);
        let mut cost = 0.0;
        let mut slope = 0.0;
        for j in 0..self.env.d {
            let (mj, dmj) = self.dimension(j, lambda, guess.map(|g| g[j]));
            let (c, c1, _) = self.env.cost[j].eval(mj);
            cost += c;
            slope += c1 * dmj;
            m.push(mj);
        }
        (m, cost, slope)
    }
}

/// Exact best response of a fully strategic developer.
pub fn solve_fs(env: &Environment, policy: &AuditPolicy, tol: f64) -> Result<BestResponse> {
    solve_fs_warm(env, policy, tol, None)
}

/// [`solve_fs`] seeded from a previous response (multiplier bracket and Newton starting points).
pub fn solve_fs_warm(
    env: &Environment,
    policy: &AuditPolicy,
    tol: f64,
    warm: Option<&BestResponse>,
) -> Result<BestResponse> {
    if let Some(j) = env.cost.iter().position(|c| !c.is_strictly_convex()) {
        return Err(contract(format!("cost of dimension {j} is not strictly convex")));
    }
    let delta = exposure(env, policy)?.delta;
    let problem = Problem { env, delta };
    let guess = warm.filter(|w| w.m.len() == env.d).map(|w| w.m.as_slice());
    let budget = env.budget;

    let (m0, c0, _) = problem.solve_at(0.0, guess);
    if c0 <= budget {
        return Ok(finish(env, &problem.delta, m0, 0.0, tol, 1));
    }

    // bracket the multiplier: C(m(lambda)) is decreasing in lambda
    let mut lo = 0.0;
    let mut hi = warm.map(|w| 2.0 * w.lambda).filter(|l| *l > 0.0).unwrap_or(1.0);
    let mut iterations = 1;
    loop {
        let (_, c, _) = problem.solve_at(hi, guess);
        iterations += 1;
        if c <= budget {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if iterations > MAX_DUAL_STEPS {
            return Err(AuditError::NonConvergence {
                solver: "budget multiplier bracketing",
                iterations,
                residual: c - budget,
            });
        }
    }

    let mut lambda = warm.map(|w| w.lambda).filter(|l| *l > lo && *l < hi).unwrap_or(0.5 * (lo + hi));
    let mut last = problem.solve_at(lambda, guess);
    for _ in 0..MAX_DUAL_STEPS {
        iterations += 1;
        let (ref m, c, slope) = last;
        let gap = c - budget;
        if gap.abs() <= 1e-15 * budget {
            break;
        }
        if gap > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let mut next = if slope < 0.0 { lambda - gap / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - lambda).abs() <= 1e-16 * lambda.max(1e-300) {
            break;
        }
        lambda = next;
        last = problem.solve_at(lambda, Some(m.as_slice()));
    }
    let (m, c, _) = last;
    let gap = (c - budget).abs();
    if gap > 1e-10 * budget {
        return Err(AuditError::NonConvergence {
            solver: "budget multiplier search",
            iterations,
            residual: gap,
        });
    }
    Ok(finish(env, &problem.delta, m, lambda, tol, iterations))
}

fn finish(env: &Environment, delta: &[f64], m: Vec<f64>, lambda: f64, tol: f64, iterations: usize) -> BestResponse {
    let mut out = describe(env, delta, m, lambda, true, iterations);
    out.converged = out.kkt_residual <= tol;
    out
}

/// Objective, cost and first-order residual of a mitigation vector at a given multiplier.
fn describe(env: &Environment, delta: &[f64], m: Vec<f64>, lambda: f64, converged: bool, iterations: usize) -> BestResponse {
    let mut objective = 0.0;
    let mut cost_used = 0.0;
    let mut residual: f64 = 0.0;
    for j in 0..env.d {
        let (g, g1, _) = env.harm_resp[j].eval(env.h[j], m[j]);
        let (c, c1, _) = env.cost[j].eval(m[j]);
        objective += delta[j] * g + c;
        cost_used += c;
        if m[j] > 0.0 {
            let marginal_cost = (1.0 + lambda) * c1;
            let r = match env.harm_resp[j].kink(env.h[j]) {
                // subgradient of the clamp at the kink is [-delta * gamma, 0]
                Some(k) if m[j] >= k => {
                    let top = delta[j] * env.harm_resp[j].initial_slope(env.h[j]);
                    (marginal_cost - top).max(0.0)
                }
                _ => (delta[j] * g1.abs() - marginal_cost).abs(),
            };
            residual = residual.max(r);
        }
    }
    BestResponse {
        m,
        lambda,
        objective,
        cost_used,
        kkt_residual: residual,
        converged,
        iterations,
    }
}

/// Developer objective `sum delta g + C` and its gradient.
fn objective_and_gradient(env: &Environment, delta: &[f64], m: &[f64]) -> (f64, Vec<f64>) {
    let mut f = 0.0;
    let mut grad = Vec::with_capacity(env.d);
    for j in 0..env.d {
        let (g, g1, _) = env.harm_resp[j].eval(env.h[j], m[j]);
        let (c, c1, _) = env.cost[j].eval(m[j]);
        f += delta[j] * g + c;
        grad.push(delta[j] * g1 + c1);
    }
    (f, grad)
}

/// Boundedly rational response: `k` projected-gradient steps with Armijo backtracking.
pub fn solve_br(env: &Environment, policy: &AuditPolicy, k: usize, eta: f64) -> Result<BestResponse> {
    if !(eta > 0.0) {
        return Err(contract("BR step size must be positive"));
    }
    let delta = exposure(env, policy)?.delta;
    let start = vec![env.budget / env.d as f64; env.d];
    let mut m = project_cost_feasible(env, &start);
    let (mut f, mut grad) = objective_and_gradient(env, &delta, &m);
    for _ in 0..k {
        let mut step = eta;
        let mut accepted = None;
        for _ in 0..=ARMIJO_MAX_HALVINGS {
            let raw: Vec<f64> = m.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let cand = project_cost_feasible(env, &raw);
            let descent: f64 = grad.iter().zip(cand.iter().zip(&m)).map(|(g, (c, x))| g * (c - x)).sum();
            let (fc, gc) = objective_and_gradient(env, &delta, &cand);
            if fc <= f + ARMIJO_SLOPE * descent {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= ARMIJO_CONTRACTION;
        }
        match accepted {
            Some((cand, fc, gc)) => {
                m = cand;
                f = fc;
                grad = gc;
            }
            None => break,
        }
    }
    let raw: Vec<f64> = m.iter().zip(&grad).map(|(x, g)| x - g).collect();
    let stationarity = project_cost_feasible(env, &raw)
        .iter()
        .zip(&m)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let mut out = describe(env, &delta, m, 0.0, stationarity <= BR_STATIONARITY_TOL, k);
    out.converged = stationarity <= BR_STATIONARITY_TOL;
    Ok(out)
}

/// Non-strategic mitigation `m_j = s w_j h_j`, scaled to exhaust the developer budget.
pub fn solve_ns(env: &Environment) -> Result<Vec<f64>> {
    let direction: Vec<f64> = env.w.iter().zip(&env.h).map(|(w, h)| w * h).collect();
    exhaust_budget(env, &direction)
}

/// Scales a nonnegative direction so that `C(s v) = B`.
pub fn exhaust_budget(env: &Environment, direction: &[f64]) -> Result<Vec<f64>> {
    env.check_len("direction", direction.len())?;
    if direction.iter().any(|&x| !(x >= 0.0)) || direction.iter().all(|&x| x == 0.0) {
        return Err(contract("budget-exhausting direction must be nonnegative and nonzero"));
    }
    let cost_at = |s: f64| env.cost.iter().zip(direction).map(|(c, &v)| c.value(s * v)).sum::<f64>();
    let mut hi = 1.0;
    while cost_at(hi) < env.budget {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let (_, s) = bisect_scale(&cost_at, env.budget, &mut lo, &mut hi);
    Ok(direction.iter().map(|v| s * v).collect())
}

/// Bisection on a nondecreasing scale-to-cost map. Returns (feasible end, midpoint estimate).
fn bisect_scale(cost_at: &dyn Fn(f64) -> f64, budget: f64, lo: &mut f64, hi: &mut f64) -> (f64, f64) {
    for _ in 0..MAX_SCALAR_STEPS {
        let mid = 0.5 * (*lo + *hi);
        if mid <= *lo || mid >= *hi {
            break;
        }
        let c = cost_at(mid);
        if c == budget {
            *lo = mid;
            *hi = mid;
            break;
        }
        if c < budget {
            *lo = mid;
        } else {
            *hi = mid;
        }
    }
    let est = if (cost_at(*hi) - budget).abs() < (cost_at(*lo) - budget).abs() {
        *hi
    } else {
        *lo
    };
    (*lo, est)
}

/// Clamps to `m >= 0` and, if over budget, shrinks radially onto `C(m) = B`.
///
/// This is a feasibility map, not the Euclidean projection onto the cost ball.
pub fn project_cost_feasible(env: &Environment, m_raw: &[f64]) -> Vec<f64> {
    let m: Vec<f64> = m_raw.iter().map(|&x| x.max(0.0)).collect();
    if env.total_cost(&m) <= env.budget {
        return m;
    }
    let cost_at = |s: f64| env.cost.iter().zip(&m).map(|(c, &v)| c.value(s * v)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    let (feasible, _) = bisect_scale(&cost_at, env.budget, &mut lo, &mut hi);
    m.iter().map(|v| feasible * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuditPolicy, CostSpec, DetectabilitySpec, HarmResponseSpec};
    use approx::assert_relative_eq;

    fn uniform(env: &Environment) -> AuditPolicy {
        AuditPolicy::new(vec![1.0 / env.d as f64; env.d], vec![env.eps_tot / env.d as f64; env.d], env.eps_tot).unwrap()
    }

    #[test]
    fn fs_worked_example_uniform() {
        let env = Environment::worked_example();
        let br = solve_fs(&env, &uniform(&env), 1e-6).unwrap();
        for &m in &br.m {
            assert!((m - 0.177).abs() < 5e-4);
        }
        assert_eq!(br.lambda, 0.0);
        assert!(br.cost_used < 1.5 && (br.cost_used - 0.047).abs() < 1e-3);
        assert!(br.converged && br.kkt_residual < 1e-12);
    }

    #[test]
    fn fs_worked_example_welfare_aware() {
        let env = Environment::worked_example();
        let policy = AuditPolicy::new(vec![0.6, 0.2, 0.2], vec![2.4, 0.3, 0.3], 3.0).unwrap();
        let br = solve_fs(&env, &policy, 1e-6).unwrap();
        let expect = [0.375, 0.049, 0.049];
        for (m, e) in br.m.iter().zip(expect) {
            assert!((m - e).abs() < 5e-4, "{:?}", br.m);
        }
    }

    #[test]
    fn fs_zero_privacy_budget_means_no_mitigation() {
        let env = Environment::worked_example();
        let policy = AuditPolicy::new(vec![0.5, 0.3, 0.2], vec![0.0; 3], 3.0).unwrap();
        let br = solve_fs(&env, &policy, 1e-6).unwrap();
        assert_eq!(br.m, vec![0.0; 3]);
        assert_eq!(br.objective, 0.0);
    }

    #[test]
    fn fs_binding_budget_matches_grid_oracle() {
        let mut env = Environment::worked_example();
        env.budget = 0.01;
        let br = solve_fs(&env, &uniform(&env), 1e-6).unwrap();
        assert!(br.lambda > 0.0);
        assert!((br.cost_used - 0.01).abs() <= 1e-10);
        assert!(br.lambda * (env.budget - br.cost_used) <= 1e-6);
        // oracle: the symmetric problem sits on the ray m = (s, s, s); scan s and lambda
        let delta = (1.0 / 3.0) * (1.0 - (-1.0f64).exp());
        let f = |s: f64| 3.0 * (delta * (-s).exp() + 0.5 * s * s);
        let s_max = (2.0 * 0.01 / 3.0f64).sqrt();
        let best = (0..=4000)
            .map(|i| s_max * i as f64 / 4000.0)
            .map(|s| (s, f(s)))
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!(br.objective <= best.1 + 1e-12);
        assert!((br.m[0] - best.0).abs() < 2.0 * s_max / 4000.0);
        // the multiplier solves the first-order condition at the budget-exhausting point
        let lam_grid = (0..=20000)
            .map(|i| 5.0 * i as f64 / 20000.0)
            .map(|l| (l, (delta * (-s_max).exp() - (1.0 + l) * s_max).abs()))
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!((br.lambda - lam_grid.0).abs() < 5e-4, "{} vs {}", br.lambda, lam_grid.0);
    }

    #[test]
    fn fs_rejects_nothing_valid_but_checks_dims() {
        let env = Environment::worked_example();
        let p = AuditPolicy::new(vec![0.5, 0.5], vec![1.0, 1.0], 3.0).unwrap();
        assert!(solve_fs(&env, &p, 1e-6).is_err());
    }

    #[test]
    fn fs_handles_linear_clamp() {
        let env = Environment {
            d: 2,
            h: vec![1.0, 1.0],
            w: vec![1.0, 1.0],
            det: vec![DetectabilitySpec::exponential(1.0); 2],
            harm_resp: vec![HarmResponseSpec::LinearClamp { gamma: 2.0 }, HarmResponseSpec::LinearClamp { gamma: 0.5 }],
            cost: vec![CostSpec::quadratic(); 2],
            budget: 10.0,
            eps_tot: 20.0,
        };
        let policy = AuditPolicy::new(vec![0.5, 0.5], vec![10.0, 10.0], 20.0).unwrap();
        let br = solve_fs(&env, &policy, 1e-6).unwrap();
        // dim 0: free optimum 0.5*2 = 1.0 exceeds the kink 0.5, dim 1: 0.5*0.5 = 0.25 < kink 2
        assert_relative_eq!(br.m[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(br.m[1], 0.5 * 0.5 * (1.0 - (-10.0f64).exp()), epsilon = 1e-12);
        assert!(br.kkt_residual < 1e-12);
    }

    #[test]
    fn br_zero_steps_is_initialization() {
        let env = Environment::worked_example();
        let br = solve_br(&env, &uniform(&env), 0, 0.05).unwrap();
        assert_eq!(br.m, vec![0.5; 3]);
        assert_eq!(br.lambda, 0.0);
    }

    #[test]
    fn br_single_step_by_hand() {
        let env = Environment::worked_example();
        let br = solve_br(&env, &uniform(&env), 1, 0.05).unwrap();
        let delta = (1.0 - (-1.0f64).exp()) / 3.0;
        let grad = -delta * (-0.5f64).exp() + 0.5;
        assert!((grad - 0.3722).abs() < 1e-4);
        for &m in &br.m {
            assert_relative_eq!(m, 0.5 - 0.05 * grad, epsilon = 1e-15);
            assert!((m - 0.4814).abs() < 1e-4);
        }
    }

    #[test]
    fn br_long_run_reaches_fs() {
        let env = Environment::worked_example();
        let fs = solve_fs(&env, &uniform(&env), 1e-6).unwrap();
        let br = solve_br(&env, &uniform(&env), 2000, 0.05).unwrap();
        let gap = fs.m.iter().zip(&br.m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-4, "gap {gap}");
        assert!(br.converged);
    }

    #[test]
    fn ns_closed_form_scale() {
        let env = Environment::worked_example();
        let m = solve_ns(&env).unwrap();
        let s = (3.0f64 / 11.0).sqrt();
        assert_relative_eq!(m[0], 3.0 * s, epsilon = 1e-12);
        assert_relative_eq!(m[1], s, epsilon = 1e-12);
        assert!((m[0] - 1.567).abs() < 1e-3 && (m[1] - 0.522).abs() < 1e-3);
        assert!((env.total_cost(&m) - 1.5).abs() <= 1e-10 * 1.5);
    }

    #[test]
    fn ns_uniform_weights() {
        let mut env = Environment::worked_example();
        env.w = vec![1.0; 3];
        let m = solve_ns(&env).unwrap();
        for x in m {
            assert_relative_eq!(x, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ns_tiny_budget_vanishes() {
        let mut env = Environment::worked_example();
        env.budget = 1e-12;
        assert!(solve_ns(&env).unwrap().iter().all(|&x| x < 1e-5));
    }

    #[test]
    fn projection_cases() {
        let env = Environment::worked_example();
        assert_eq!(project_cost_feasible(&env, &[0.1, 0.2, 0.3]), vec![0.1, 0.2, 0.3]);
        let p = project_cost_feasible(&env, &[2.0, 2.0, 2.0]);
        for x in &p {
            assert_relative_eq!(*x, 1.0, epsilon = 1e-12);
        }
        assert!(env.total_cost(&p) <= env.budget);
        let env2 = Environment::exponential(vec![1.0; 2], vec![1.0; 2], vec![1.0; 2], 1.0, 2.0, 10.0, 1.0).unwrap();
        assert_eq!(project_cost_feasible(&env2, &[-1.0, 0.5]), vec![0.0, 0.5]);
    }

    #[test]
    fn dispatch_by_type() {
        let env = Environment::worked_example();
        let p = uniform(&env);
        let ns = best_response(&env, &p, &DeveloperType::NonStrategic).unwrap();
        assert_eq!(ns.m, solve_ns(&env).unwrap());
        let fs = best_response(&env, &p, &DeveloperType::fully_strategic()).unwrap();
        assert!(fs.converged);
        assert_eq!(DeveloperType::boundedly_rational().label(), "BR");
    }
}
