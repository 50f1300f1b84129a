//! Projected-gradient descent on the welfare-weighted gap through the developer's response.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::{baseline_policy, BaselineKind};
use super::hypergrad::{fd_hypergradient, hypergradient_at, HypergradMode, Hypergradient};
use super::projection::{project_budget, project_simplex};
use crate::error::{contract, AuditError, Result};
use crate::lower::{best_response, solve_fs_warm, BestResponse, DeveloperType};
use crate::model::{exposure, metrics_from_delta, AuditPolicy, Environment};
use crate::rng::stream;

/// Iterations between two applications of the step decay.
pub const DECAY_EVERY: usize = 20;
/// Relative increase of `B_w` that counts as a non-monotone step.
const MONOTONE_SLACK: f64 = 1e-9;
const RESTART_AXIS: u64 = 0x5BAD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpadOptions {
    /// Initial step. `None` means `0.1 * eps_tot`.
    pub eta0: Option<f64>,
    pub decay: f64,
    pub tol: f64,
    pub t_max: usize,
    pub restarts: usize,
    pub hypergrad_mode: HypergradMode,
    pub rng_seed: u64,
    /// Starting point of restart 0. `None` means the uniform rule.
    #[serde(default)]
    pub initial: Option<AuditPolicy>,
    /// Additional starting points, each run as its own restart after the random ones.
    #[serde(default)]
    pub seed_policies: Vec<AuditPolicy>,
}

impl Default for SpadOptions {
    fn default() -> Self {
        SpadOptions {
            eta0: None,
            decay: 0.95,
            tol: 1e-4,
            t_max: 200,
            restarts: 5,
            hypergrad_mode: HypergradMode::Analytic,
            rng_seed: 0,
            initial: None,
            seed_policies: Vec::new(),
        }
    }
}

impl SpadOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(eta) = self.eta0 {
            if !(eta > 0.0) {
                return Err(contract("eta0 must be positive"));
            }
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(contract("decay must lie in (0, 1]"));
        }
        if self.restarts == 0 {
            return Err(contract("at least one restart is required"));
        }
        if !(self.tol >= 0.0) {
            return Err(contract("tolerance must be nonnegative"));
        }
        if let HypergradMode::FiniteDifference { step } = self.hypergrad_mode {
            if !(step > 0.0) {
                return Err(contract("finite-difference step must be positive"));
            }
        }
        Ok(())
    }

    pub fn step_at(&self, eps_tot: f64, t: usize) -> f64 {
        let eta0 = self.eta0.unwrap_or(0.1 * eps_tot);
        eta0 * self.decay.powi((t / DECAY_EVERY) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub iteration: usize,
    pub bw: f64,
    /// Norm of the projected-gradient map `(x - P(x - eta g)) / eta`.
    pub grad_norm: f64,
    pub step: f64,
    pub pi: Vec<f64>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    pub records: Vec<TraceRecord>,
    pub selected_restart: usize,
    /// Best `B_w` reached by each restart, `None` for restarts whose inner solve failed.
    pub restart_best: Vec<Option<f64>>,
}

impl OptimTrace {
    /// Share of steps within a restart that increased `B_w`.
    pub fn monotonicity_violations(&self) -> f64 {
        let mut steps = 0usize;
        let mut bad = 0usize;
        for pair in self.records.windows(2) {
            if pair[0].restart != pair[1].restart {
                continue;
            }
            steps += 1;
            if pair[1].bw > pair[0].bw + MONOTONE_SLACK * pair[0].bw.abs().max(1.0) {
                bad += 1;
            }
        }
        if steps == 0 {
            0.0
        } else {
            bad as f64 / steps as f64
        }
    }

    pub fn for_restart(&self, restart: usize) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.restart == restart)
    }

    /// Writes `iteration,restart,B_w,grad_norm,step` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "restart", "B_w", "grad_norm", "step"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.restart.to_string(),
                format!("{:.12e}", r.bw),
                format!("{:.12e}", r.grad_norm),
                format!("{:.12e}", r.step),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpadOutcome {
    pub policy: AuditPolicy,
    pub bw: f64,
    /// Outer iterations of the selected restart.
    pub iterations: usize,
    /// Whether the selected restart met the stationarity tolerance before `t_max`.
    pub converged: bool,
    pub trace: OptimTrace,
}

/// Optimizes the audit policy against a fully strategic developer.
pub fn spad(env: &Environment, opts: &SpadOptions) -> Result<SpadOutcome> {
    spad_against(env, &DeveloperType::fully_strategic(), opts)
}

/// Optimizes the audit policy against `dev`.
///
/// Against a fully strategic developer the hypergradient follows `opts.hypergrad_mode`. Other
/// developer types have no implicit-function structure and always use forward differences.
pub fn spad_against(env: &Environment, dev: &DeveloperType, opts: &SpadOptions) -> Result<SpadOutcome> {
    env.validate()?;
    dev.validate()?;
    opts.validate()?;
    let starts = starting_points(env, opts)?;
    let runs: Vec<Result<RestartRun>> = starts
        .par_iter()
        .enumerate()
        .map(|(r, start)| run_restart(env, dev, opts, r, start.clone()))
        .collect();

    let mut trace = OptimTrace::default();
    let mut best: Option<(usize, RestartRun)> = None;
    let mut last_err: Option<AuditError> = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                trace.restart_best.push(Some(run.best_bw));
                trace.records.extend(run.records.iter().cloned());
                // strict comparison keeps the lowest index on ties
                if best.as_ref().is_none_or(|(_, b)| run.best_bw < b.best_bw) {
                    best = Some((r, run));
                }
            }
            Err(e) => {
                log::warn!("restart {r} aborted: {e}");
                trace.restart_best.push(None);
                last_err = Some(e);
            }
        }
    }
    let (selected, run) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or_else(|| contract("no restart ran"))),
    };
    trace.selected_restart = selected;
    Ok(SpadOutcome {
        policy: run.best_policy,
        bw: run.best_bw,
        iterations: run.iterations,
        converged: run.converged,
        trace,
    })
}

fn starting_points(env: &Environment, opts: &SpadOptions) -> Result<Vec<AuditPolicy>> {
    let first = match &opts.initial {
        Some(p) => p.clone().validated(env)?,
        None => baseline_policy(&BaselineKind::Unif, env)?,
    };
    let mut starts = vec![first];
    for r in 1..opts.restarts {
        starts.push(random_start(env, opts.rng_seed, r)?);
    }
    for p in &opts.seed_policies {
        starts.push(p.clone().validated(env)?);
    }
    Ok(starts)
}

/// Dirichlet(1) query distribution and a uniformly random split of the full privacy budget.
fn random_start(env: &Environment, seed: u64, restart: usize) -> Result<AuditPolicy> {
    let mut rng = stream(seed, RESTART_AXIS, restart as u64);
    let unit = Gamma::new(1.0, 1.0).expect("unit gamma");
    let raw_pi: Vec<f64> = (0..env.d).map(|_| unit.sample(&mut rng)).collect();
    let raw_eps: Vec<f64> = (0..env.d).map(|_| rng.random::<f64>()).collect();
    let sp: f64 = raw_pi.iter().sum();
    let se: f64 = raw_eps.iter().sum();
    let pi = raw_pi.iter().map(|x| x / sp).collect();
    let eps = raw_eps.iter().map(|x| env.eps_tot * x / se).collect();
    AuditPolicy::new(pi, eps, env.eps_tot)
}

struct RestartRun {
    records: Vec<TraceRecord>,
    best_policy: AuditPolicy,
    best_bw: f64,
    iterations: usize,
    converged: bool,
}

fn run_restart(
    env: &Environment,
    dev: &DeveloperType,
    opts: &SpadOptions,
    restart: usize,
    start: AuditPolicy,
) -> Result<RestartRun> {
    let fs_tol = match *dev {
        DeveloperType::FullyStrategic { tol } => Some(tol),
        _ => None,
    };
    let mut policy = start;
    let mut warm: Option<BestResponse> = None;
    let mut records = Vec::new();
    let mut best: Option<(AuditPolicy, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for t in 0..=opts.t_max {
        let br = match fs_tol {
            Some(tol) => solve_fs_warm(env, &policy, tol, warm.as_ref())?,
            None => best_response(env, &policy, dev)?,
        };
        let delta = exposure(env, &policy)?.delta;
        let bw = metrics_from_delta(env, &delta, &br.m).bw;
        if best.as_ref().is_none_or(|(_, b)| bw < *b) {
            best = Some((policy.clone(), bw));
        }
        let grad: Hypergradient = match fs_tol {
            Some(_) => hypergradient_at(env, &policy, &br, opts.hypergrad_mode)?,
            None => {
                let step = match opts.hypergrad_mode {
                    HypergradMode::FiniteDifference { step } => step,
                    HypergradMode::Analytic => super::hypergrad::DEFAULT_FD_STEP,
                };
                fd_hypergradient(env, &policy, dev, step)?
            }
        };
        let eta = opts.step_at(env.eps_tot, t);
        let next = projected_step(&policy, &grad, eta, env.eps_tot);
        let grad_norm = gradient_map_norm(&policy, &next, eta);
        records.push(TraceRecord {
            restart,
            iteration: t,
            bw,
            grad_norm,
            step: eta,
            pi: policy.pi().to_vec(),
            eps: policy.eps().to_vec(),
        });
        iterations = t;
        if grad_norm <= opts.tol {
            converged = true;
            break;
        }
        if t == opts.t_max {
            break;
        }
        warm = Some(br);
        policy = next;
    }
    let (best_policy, best_bw) = best.expect("at least one iterate");
    Ok(RestartRun {
        records,
        best_policy,
        best_bw,
        iterations,
        converged,
    })
}

fn projected_step(policy: &AuditPolicy, grad: &Hypergradient, eta: f64, eps_tot: f64) -> AuditPolicy {
    let pi_raw: Vec<f64> = policy.pi().iter().zip(&grad.grad_pi).map(|(p, g)| p - eta * g).collect();
    let eps_raw: Vec<f64> = policy.eps().iter().zip(&grad.grad_eps).map(|(e, g)| e - eta * g).collect();
    AuditPolicy::unchecked(project_simplex(&pi_raw), project_budget(&eps_raw, eps_tot))
}

fn gradient_map_norm(from: &AuditPolicy, to: &AuditPolicy, eta: f64) -> f64 {
    let sq: f64 = from
        .pi()
        .iter()
        .zip(to.pi())
        .chain(from.eps().iter().zip(to.eps()))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    sq.sqrt() / eta
}
