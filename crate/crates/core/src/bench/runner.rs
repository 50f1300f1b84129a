//! Ablation cells: sample an environment, build each rule's policy, let each developer type
//! respond, record the audit metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_environment, HarmMode, KappaMode, SamplingConfig, WelfareMode, DEFAULT_MASTER_SEED};
use super::stats::{bootstrap_ci, holm_bonferroni, paired_compare_with, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::design::{baseline_policy, spad, BaselineKind, SpadOptions};
use crate::error::{contract, AuditError, Result};
use crate::lower::{best_response, DeveloperType};
use crate::model::{compute_metrics, AuditMetrics, AuditPolicy, Environment};
use crate::rng::stream_seed;

pub const ROWS_HEADER: [&str; 12] = [
    "axis", "d", "eps_tot", "seed", "developer", "rule", "DH", "TRH", "B_w", "rel_Bw", "iterations", "converged",
];
pub const SUMMARY_HEADER: [&str; 11] = [
    "axis",
    "config",
    "rule_a",
    "rule_b",
    "mean_reduction_pct",
    "ci_lo",
    "ci_hi",
    "p_t",
    "p_wilcoxon",
    "cohens_d",
    "p_holm",
];
/// Privacy budgets swept by A1 and A1b.
pub const EPS_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    A1,
    A1b,
    A2,
    A3,
    A4,
    A5,
    A6,
}

impl Axis {
    pub const ALL: [Axis; 7] = [Axis::A1, Axis::A1b, Axis::A2, Axis::A3, Axis::A4, Axis::A5, Axis::A6];

    pub fn id(self) -> &'static str {
        match self {
            Axis::A1 => "A1",
            Axis::A1b => "A1b",
            Axis::A2 => "A2",
            Axis::A3 => "A3",
            Axis::A4 => "A4",
            Axis::A5 => "A5",
            Axis::A6 => "A6",
        }
    }

    fn stream_code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Axis {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| contract(format!("unknown axis `{s}` (expected one of a1, a1b, a2, a3, a4, a5, a6)")))
    }
}

/// An auditor rule: a fixed baseline or the bilevel optimizer.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Baseline(BaselineKind),
    Spad(SpadOptions),
}

impl Rule {
    pub fn label(&self) -> &'static str {
        match self {
            Rule::Baseline(kind) => kind.label(),
            Rule::Spad(_) => "SPAD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Axis id, followed by the varied setting in brackets when it is not visible in `d` or `eps_tot`.
    pub axis: String,
    pub d: usize,
    pub eps_tot: f64,
    pub seed: u64,
    pub developer: String,
    pub rule: String,
    /// Absent when a solver failed.
    pub metrics: Option<AuditMetrics>,
    /// Outer iterations of the optimizer, zero for fixed rules.
    pub iterations: usize,
    /// Whether the cell produced metrics.
    pub converged: bool,
}

impl ResultRow {
    pub fn rel_bw(&self) -> Option<f64> {
        self.metrics.as_ref().map(AuditMetrics::relative_gap)
    }

    fn sort_key(&self) -> (&str, usize, u64, u64, &str, &str) {
        (&self.axis, self.d, self.eps_tot.to_bits(), self.seed, &self.developer, &self.rule)
    }

    fn record(&self) -> Vec<String> {
        let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let m = self.metrics.as_ref();
        vec![
            self.axis.clone(),
            self.d.to_string(),
            self.eps_tot.to_string(),
            self.seed.to_string(),
            self.developer.clone(),
            self.rule.clone(),
            num(m.map(|m| m.dh)),
            num(m.map(|m| m.trh)),
            num(m.map(|m| m.bw)),
            num(self.rel_bw()),
            self.iterations.to_string(),
            self.converged.to_string(),
        ]
    }
}

/// Runs one `(environment, developer, rule)` cell.
pub fn run_cell(env: &Environment, dev: &DeveloperType, rule: &Rule) -> ResultRow {
    let built = build_policy(env, rule);
    evaluate(env, dev, rule.label(), built, "", 0)
}

fn build_policy(env: &Environment, rule: &Rule) -> Result<(AuditPolicy, usize)> {
    match rule {
        Rule::Baseline(kind) => Ok((baseline_policy(kind, env)?, 0)),
        Rule::Spad(opts) => spad(env, opts).map(|o| (o.policy, o.iterations)),
    }
}

fn evaluate(
    env: &Environment,
    dev: &DeveloperType,
    rule: &str,
    built: Result<(AuditPolicy, usize)>,
    axis: &str,
    seed: u64,
) -> ResultRow {
    let outcome = built.and_then(|(policy, iterations)| {
        let br = best_response(env, &policy, dev)?;
        Ok((compute_metrics(env, &policy, &br.m)?, iterations))
    });
    let (metrics, iterations) = match outcome {
        Ok((m, it)) => (Some(m), it),
        Err(e) => {
            log::warn!("cell {axis}/{seed}/{}/{rule} failed: {e}", dev.label());
            (None, 0)
        }
    };
    ResultRow {
        axis: axis.to_string(),
        d: env.d,
        eps_tot: env.eps_tot,
        seed,
        developer: dev.label().to_string(),
        rule: rule.to_string(),
        converged: metrics.is_some(),
        metrics,
        iterations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOptions {
    pub seeds: usize,
    pub master_seed: u64,
    /// Template for the optimizer; its `rng_seed` is replaced per cell.
    pub spad: SpadOptions,
}

impl Default for AblationOptions {
    fn default() -> Self {
        AblationOptions {
            seeds: 20,
            master_seed: DEFAULT_MASTER_SEED,
            spad: SpadOptions::default(),
        }
    }
}

/// One swept setting of an axis.
#[derive(Debug, Clone)]
struct Setting {
    label: String,
    sampling: SamplingConfig,
    developers: Vec<DeveloperType>,
}

fn settings(axis: Axis, master_seed: u64) -> Vec<Setting> {
    let base = SamplingConfig {
        master_seed,
        stream_axis: axis.stream_code(),
        welfare_mode: WelfareMode::Dirichlet,
        ..SamplingConfig::default()
    };
    let fs = vec![DeveloperType::fully_strategic()];
    let plain = |sampling: SamplingConfig, developers: Vec<DeveloperType>| Setting {
        label: axis.id().to_string(),
        sampling,
        developers,
    };
    let tagged = |tag: String, sampling: SamplingConfig| Setting {
        label: format!("{}[{tag}]", axis.id()),
        sampling,
        developers: vec![DeveloperType::fully_strategic()],
    };
    match axis {
        Axis::A1 | Axis::A1b => {
            let welfare_mode = if axis == Axis::A1 {
                WelfareMode::Uniform
            } else {
                WelfareMode::Dirichlet
            };
            EPS_GRID
                .iter()
                .map(|&eps_tot| {
                    plain(
                        SamplingConfig {
                            eps_tot,
                            welfare_mode,
                            ..base.clone()
                        },
                        vec![DeveloperType::fully_strategic(), DeveloperType::boundedly_rational()],
                    )
                })
                .collect()
        }
        Axis::A2 => [5, 10, 20]
            .into_iter()
            .map(|d| plain(SamplingConfig { d, ..base.clone() }, fs.clone()))
            .collect(),
        Axis::A3 => [(KappaMode::Homogeneous, "homogeneous"), (KappaMode::Heterogeneous, "heterogeneous")]
            .into_iter()
            .map(|(kappa_mode, tag)| tagged(format!("kappa={tag}"), SamplingConfig { kappa_mode, ..base.clone() }))
            .collect(),
        Axis::A4 => vec![plain(
            base.clone(),
            vec![
                DeveloperType::fully_strategic(),
                DeveloperType::boundedly_rational(),
                DeveloperType::NonStrategic,
            ],
        )],
        Axis::A5 => [(HarmMode::Sparse, "sparse"), (HarmMode::Dense, "dense")]
            .into_iter()
            .map(|(harm_mode, tag)| tagged(format!("h={tag}"), SamplingConfig { harm_mode, ..base.clone() }))
            .collect(),
        Axis::A6 => [1.5, 2.0, 3.0]
            .into_iter()
            .map(|cost_p| tagged(format!("p={cost_p}"), SamplingConfig { cost_p, ..base.clone() }))
            .collect(),
    }
}

/// Number of rows [`run_ablation`] produces.
pub fn cell_count(axis: Axis, seeds: usize) -> usize {
    settings(axis, 0).iter().map(|s| s.developers.len()).sum::<usize>() * seeds * 4
}

/// Runs every `(setting, seed, developer, rule)` cell of `axis` with rules UNIF, HP, WP and SPAD.
///
/// Cells run on the current rayon pool. Rows come back sorted by
/// `(axis, d, eps_tot, seed, developer, rule)`, so the output does not depend on scheduling.
pub fn run_ablation(axis: Axis, opts: &AblationOptions) -> Result<Vec<ResultRow>> {
    if opts.seeds < 2 {
        return Err(contract("an ablation needs at least two seeds"));
    }
    opts.spad.validate()?;
    let jobs: Vec<(Setting, u64)> = settings(axis, opts.master_seed)
        .into_iter()
        .flat_map(|s| (0..opts.seeds as u64).map(move |seed| (s.clone(), seed)))
        .collect();
    let mut rows: Vec<ResultRow> = jobs
        .par_iter()
        .map(|(setting, seed)| run_setting(setting, *seed, opts))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

fn run_setting(setting: &Setting, seed: u64, opts: &AblationOptions) -> Result<Vec<ResultRow>> {
    let env = sample_environment(&setting.sampling, seed)?;
    let spad_opts = SpadOptions {
        rng_seed: stream_seed(opts.master_seed, setting.sampling.stream_axis, seed),
        ..opts.spad.clone()
    };
    let rules = [
        Rule::Baseline(BaselineKind::Unif),
        Rule::Baseline(BaselineKind::Hp),
        Rule::Baseline(BaselineKind::Wp),
        Rule::Spad(spad_opts),
    ];
    // each policy is built once and shared by every developer type
    let mut rows = Vec::new();
    for rule in &rules {
        let built = build_policy(&env, rule);
        for dev in &setting.developers {
            let b = match &built {
                Ok(v) => Ok(v.clone()),
                Err(e) => Err(contract(e.to_string())),
            };
            rows.push(evaluate(&env, dev, rule.label(), b, &setting.label, seed));
        }
    }
    Ok(rows)
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROWS_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub config: String,
    pub rule_a: String,
    pub rule_b: String,
    /// Mean over seeds of `100 (B_w[rule_b] - B_w[rule_a]) / B_w[rule_b]`.
    pub mean_reduction_pct: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_t: f64,
    pub p_wilcoxon: f64,
    pub cohens_d: f64,
    pub p_holm: f64,
    pub n: usize,
}

/// `(setting, d, eps_tot bits, developer)` to `rule` to `seed` to relative gap.
type Groups = BTreeMap<(String, usize, u64, String), BTreeMap<String, BTreeMap<u64, f64>>>;

/// Compares SPAD against each fixed rule within every `(setting, d, eps_tot, developer)` group,
/// with Holm's correction across the comparisons of a group.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    let mut groups = Groups::new();
    for r in rows {
        if let Some(m) = &r.metrics {
            groups
                .entry((r.axis.clone(), r.d, r.eps_tot.to_bits(), r.developer.clone()))
                .or_default()
                .entry(r.rule.clone())
                .or_default()
                .insert(r.seed, m.bw);
        }
    }
    let mut out = Vec::new();
    for ((label, d, eps_bits, dev), by_rule) in groups {
        let Some(spad_bw) = by_rule.get("SPAD") else { continue };
        let (axis, variant) = match label.split_once('[') {
            Some((a, v)) => (a.to_string(), format!("{};", v.trim_end_matches(']'))),
            None => (label.clone(), String::new()),
        };
        let config = format!("{variant}d={d};eps_tot={};dev={dev}", f64::from_bits(eps_bits));
        let mut family = Vec::new();
        for baseline in ["UNIF", "HP", "WP"] {
            let Some(base_bw) = by_rule.get(baseline) else { continue };
            let seeds: Vec<u64> = base_bw.keys().filter(|s| spad_bw.contains_key(s)).copied().collect();
            if seeds.len() < 2 {
                continue;
            }
            let b: Vec<f64> = seeds.iter().map(|s| base_bw[s]).collect();
            let a: Vec<f64> = seeds.iter().map(|s| spad_bw[s]).collect();
            let red: Vec<f64> = b.iter().zip(&a).map(|(b, a)| 100.0 * (b - a) / b).collect();
            let (ci_lo, ci_hi) = bootstrap_ci(&red, DEFAULT_RESAMPLES, DEFAULT_LEVEL, eps_bits ^ d as u64)?;
            let report = paired_compare_with(&b, &a, 1, 0)?;
            family.push(SummaryRow {
                axis: axis.clone(),
                config: config.clone(),
                rule_a: "SPAD".into(),
                rule_b: baseline.into(),
                mean_reduction_pct: red.iter().sum::<f64>() / red.len() as f64,
                ci_lo,
                ci_hi,
                p_t: report.p_t,
                p_wilcoxon: report.p_wilcoxon,
                cohens_d: report.cohens_d,
                p_holm: f64::NAN,
                n: seeds.len(),
            });
        }
        let adjusted = holm_bonferroni(&family.iter().map(|r| r.p_t).collect::<Vec<_>>())?;
        for (row, p) in family.iter_mut().zip(adjusted) {
            row.p_holm = p;
        }
        out.extend(family);
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.axis.clone(),
            r.config.clone(),
            r.rule_a.clone(),
            r.rule_b.clone(),
            r.mean_reduction_pct.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.p_t.to_string(),
            r.p_wilcoxon.to_string(),
            r.cohens_d.to_string(),
            r.p_holm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
