//! Command-line front end. The `spad` binary is a thin wrapper around [`run`].

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bench::{
    cell_count, run_ablation, summarize, write_rows_csv, write_summary_csv, AblationOptions, Axis, SummaryRow,
    DEFAULT_MASTER_SEED,
};
use crate::design::{baseline_policy, spad_against, BaselineKind, SpadOptions};
use crate::error::{contract, AuditError, Result};
use crate::lower::{best_response, solve_fs, DeveloperType, DEFAULT_FS_TOL};
use crate::model::{calibrate_mechanism, compute_metrics, AuditMetrics, AuditPolicy, DetectabilitySpec, Environment};
use crate::verify::{run_check, Check, CheckStatus, DEFAULT_CELLS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Overrides the default master seed of sweeps and verification grids.
pub const MASTER_SEED_VAR: &str = "SPAD_MASTER_SEED";

#[derive(Debug, Parser)]
#[command(name = "spad", version, about = "Strategic private audit design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reproduce the three-dimensional worked example.
    Example,
    /// Solve one developer best response and report its metrics.
    Solve(SolveArgs),
    /// Optimize an audit policy.
    Spad(SpadArgs),
    /// Run one ablation axis and write rows.csv and summary.csv.
    Sweep(SweepArgs),
    /// Run numerical checks of the structural results.
    Verify(VerifyArgs),
    /// Calibrate a reduced-form DP mechanism against the exponential family.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DeveloperArg {
    Fs,
    Br,
    Ns,
}

impl DeveloperArg {
    fn developer(self) -> DeveloperType {
        match self {
            DeveloperArg::Fs => DeveloperType::fully_strategic(),
            DeveloperArg::Br => DeveloperType::boundedly_rational(),
            DeveloperArg::Ns => DeveloperType::NonStrategic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    Unif,
    Hp,
    Wp,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Environment JSON. Defaults to the worked example.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Policy JSON with `pi` and `eps`.
    #[arg(long, conflicts_with = "baseline")]
    pub policy: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unif")]
    pub baseline: BaselineArg,
    #[arg(long, value_enum, default_value = "fs")]
    pub developer: DeveloperArg,
}

#[derive(Debug, Args)]
pub struct SpadArgs {
    /// Environment JSON. Defaults to the worked example.
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fs")]
    pub developer: DeveloperArg,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the per-iteration trace as CSV to this path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// One of a1, a1b, a2, a3, a4, a5, a6.
    #[arg(value_name = "AXIS", required_unless_present = "axis")]
    pub axis_pos: Option<String>,
    #[arg(long, conflicts_with = "axis_pos")]
    pub axis: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads. Defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// theorem1, hyp-vi, corollary, lower-bound, counterexample, hypergrad or all.
    #[arg(default_value = "all")]
    pub check: String,
    #[arg(long, default_value_t = DEFAULT_CELLS)]
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MechanismArg {
    Gaussian,
    Laplace,
    Rr,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub mechanism: MechanismArg,
    #[arg(long, default_value_t = 1.0)]
    pub sensitivity: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta_dp: f64,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h_ref: f64,
    #[arg(long, default_value_t = 0.0)]
    pub c_null: f64,
    /// Number of randomized-response answers.
    #[arg(long, default_value_t = 100.0)]
    pub n: f64,
    /// Also write the calibration JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code of an error.
pub fn exit_code(e: &AuditError) -> i32 {
    match e {
        AuditError::Io(_) | AuditError::Json(_) | AuditError::Csv(_) => EXIT_IO,
        AuditError::Contract(_) | AuditError::Domain(_) => EXIT_USAGE,
        AuditError::NonConvergence { .. } => EXIT_FAILURE,
    }
}

/// The master seed, from [`MASTER_SEED_VAR`] when set.
pub fn master_seed() -> Result<u64> {
    match std::env::var(MASTER_SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| contract(format!("{MASTER_SEED_VAR} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_MASTER_SEED),
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Sweep(args) => cmd_sweep(&args, out),
        // everything but sweeps runs on one thread
        other => {
            let pool = single_thread_pool()?;
            let mut buf: Vec<u8> = Vec::new();
            let result = pool.install(|| {
                let sink: &mut dyn Write = &mut buf;
                match other {
                    Command::Example => cmd_example(sink),
                    Command::Solve(a) => cmd_solve(&a, sink),
                    Command::Spad(a) => cmd_spad(&a, sink),
                    Command::Verify(a) => cmd_verify(&a, sink),
                    Command::Calibrate(a) => cmd_calibrate(&a, sink),
                    Command::Sweep(_) => unreachable!("handled above"),
                }
            });
            out.write_all(&buf)?;
            result
        }
    }
}

fn single_thread_pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| contract(format!("cannot start worker pool: {e}")))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AuditError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_env(path: Option<&Path>) -> Result<Environment> {
    match path {
        Some(p) => Environment::from_json_str(&read_file(p)?),
        None => Ok(Environment::worked_example()),
    }
}

/// Published figures of the worked example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleExpectations {
    pub dh_uniform: f64,
    pub trh_uniform: f64,
    pub bw_uniform: f64,
    pub trh_welfare: f64,
    pub bw_welfare: f64,
    /// Relative `B_w` reduction as a fraction.
    pub reduction: f64,
}

pub const WORKED_EXAMPLE: ExampleExpectations = ExampleExpectations {
    dh_uniform: 0.530,
    trh_uniform: 4.191,
    bw_uniform: 3.308,
    trh_welfare: 3.966,
    bw_welfare: 2.742,
    reduction: 0.17,
};

pub const EXAMPLE_TOL: f64 = 5e-3;

/// The welfare-aware policy of the worked example.
pub fn welfare_aware_policy() -> AuditPolicy {
    AuditPolicy::new(vec![0.6, 0.2, 0.2], vec![2.4, 0.3, 0.3], 3.0).expect("valid policy")
}

/// Evaluates both worked-example policies under the exact best response, writes the comparison
/// table and returns whether every figure is within [`EXAMPLE_TOL`] of `expected`.
pub fn example_report(expected: &ExampleExpectations, out: &mut dyn Write) -> Result<bool> {
    let env = Environment::worked_example();
    let evaluate = |policy: &AuditPolicy| -> Result<AuditMetrics> {
        let br = solve_fs(&env, policy, DEFAULT_FS_TOL)?;
        compute_metrics(&env, policy, &br.m)
    };
    let uniform = evaluate(&baseline_policy(&BaselineKind::Unif, &env)?)?;
    let welfare = evaluate(&welfare_aware_policy())?;
    let reduction = (uniform.bw - welfare.bw) / uniform.bw;

    writeln!(out, "{:<10} {:>8} {:>8} {:>8}", "policy", "DH", "TRH", "B_w")?;
    writeln!(out, "{:<10} {:>8.3} {:>8.3} {:>8.3}", "uniform", uniform.dh, uniform.trh, uniform.bw)?;
    writeln!(out, "{:<10} {:>8.3} {:>8.3} {:>8.3}", "welfare", welfare.dh, welfare.trh, welfare.bw)?;
    writeln!(out, "B_w reduction: {:.1}%", 100.0 * reduction)?;

    let checks = [
        ("DH uniform", uniform.dh, expected.dh_uniform),
        ("TRH uniform", uniform.trh, expected.trh_uniform),
        ("B_w uniform", uniform.bw, expected.bw_uniform),
        ("TRH welfare", welfare.trh, expected.trh_welfare),
        ("B_w welfare", welfare.bw, expected.bw_welfare),
        ("reduction", reduction, expected.reduction),
    ];
    let misses: Vec<_> = checks.iter().filter(|(_, got, want)| (got - want).abs() > EXAMPLE_TOL).collect();
    if !misses.is_empty() {
        writeln!(out, "\n{:<12} {:>10} {:>10} {:>10}", "mismatch", "computed", "expected", "diff")?;
        for (name, got, want) in misses {
            writeln!(out, "{name:<12} {got:>10.4} {want:>10.4} {:>10.4}", got - want)?;
        }
    }
    Ok(checks.iter().all(|(_, got, want)| (got - want).abs() <= EXAMPLE_TOL))
}

pub fn cmd_example(out: &mut dyn Write) -> Result<i32> {
    Ok(if example_report(&WORKED_EXAMPLE, out)? {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let env = load_env(args.env.as_deref())?;
    let policy = match &args.policy {
        Some(p) => AuditPolicy::from_json_str(&read_file(p)?, &env)?,
        None => {
            let kind = match args.baseline {
                BaselineArg::Unif => BaselineKind::Unif,
                BaselineArg::Hp => BaselineKind::Hp,
                BaselineArg::Wp => BaselineKind::Wp,
            };
            baseline_policy(&kind, &env)?
        }
    };
    let dev = args.developer.developer();
    let br = best_response(&env, &policy, &dev)?;
    let metrics = compute_metrics(&env, &policy, &br.m)?;
    let report = json!({
        "developer": dev.label(),
        "policy": policy,
        "m": br.m,
        "lambda": br.lambda,
        "cost_used": br.cost_used,
        "converged": br.converged,
        "metrics": metrics,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(EXIT_OK)
}

fn cmd_spad(args: &SpadArgs, out: &mut dyn Write) -> Result<i32> {
    let env = load_env(args.env.as_deref())?;
    let mut opts = SpadOptions::default();
    if let Some(r) = args.restarts {
        opts.restarts = r;
    }
    if let Some(t) = args.t_max {
        opts.t_max = t;
    }
    if let Some(t) = args.tol {
        opts.tol = t;
    }
    opts.eta0 = args.eta0.or(opts.eta0);
    opts.rng_seed = match args.seed {
        Some(s) => s,
        None => master_seed()?,
    };
    let outcome = spad_against(&env, &args.developer.developer(), &opts)?;
    if let Some(path) = &args.trace {
        outcome.trace.write_csv(create_file(path)?)?;
    }
    let report = json!({
        "policy": outcome.policy,
        "B_w": outcome.bw,
        "iterations": outcome.iterations,
        "converged": outcome.converged,
        "selected_restart": outcome.trace.selected_restart,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(EXIT_OK)
}

fn create_file(path: &Path) -> Result<io::BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_context(e, parent))?;
    }
    let f = fs::File::create(path).map_err(|e| io_context(e, path))?;
    Ok(io::BufWriter::new(f))
}

fn io_context(e: io::Error, path: &Path) -> AuditError {
    AuditError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let name = args.axis.as_deref().or(args.axis_pos.as_deref()).unwrap_or_default();
    let axis: Axis = name.parse()?;
    if args.seeds < 2 {
        return Err(contract("--seeds must be at least 2"));
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(contract("--workers must be positive"));
    }
    let opts = AblationOptions {
        seeds: args.seeds,
        master_seed: master_seed()?,
        ..AblationOptions::default()
    };
    // fail on an unwritable destination before the expensive part
    fs::create_dir_all(&args.out).map_err(|e| io_context(e, &args.out))?;
    let rows_path = args.out.join("rows.csv");
    let summary_path = args.out.join("summary.csv");
    let rows_file = create_file(&rows_path)?;

    log::info!("{axis}: {} cells on {workers} workers", cell_count(axis, args.seeds));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| contract(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| run_ablation(axis, &opts))?;
    write_rows_csv(&rows, rows_file)?;
    let summary = pool.install(|| summarize(&rows))?;
    write_summary_csv(&summary, create_file(&summary_path)?)?;
    print_summary(&summary, out)?;
    writeln!(out, "wrote {} and {}", rows_path.display(), summary_path.display())?;
    Ok(EXIT_OK)
}

fn print_summary(rows: &[SummaryRow], out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "{:<12} {:<28} {:<6} {:>9} {:>20} {:>9}",
        "axis", "config", "vs", "mean %", "95% CI", "p_holm"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:<12} {:<28} {:<6} {:>9.2} {:>20} {:>9.2e}",
            r.axis,
            r.config,
            r.rule_b,
            r.mean_reduction_pct,
            format!("[{:.2}, {:.2}]", r.ci_lo, r.ci_hi),
            r.p_holm
        )?;
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let check: Check = args.check.parse()?;
    if args.cells == 0 {
        return Err(contract("--cells must be positive"));
    }
    let reports = run_check(check, args.cells, master_seed()?)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
    let failed: Vec<_> = reports.iter().filter(|r| r.status == CheckStatus::Fail).collect();
    for r in &failed {
        log::error!("{} failed on {}", r.check, r.instance);
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_calibrate(args: &CalibrateArgs, out: &mut dyn Write) -> Result<i32> {
    let mechanism = match args.mechanism {
        MechanismArg::Gaussian => DetectabilitySpec::GaussianReduced {
            sensitivity: args.sensitivity,
            delta_dp: args.delta_dp,
            level: args.level,
            h_ref: args.h_ref,
        },
        MechanismArg::Laplace => DetectabilitySpec::LaplaceReduced {
            sensitivity: args.sensitivity,
            c_null: args.c_null,
            h_ref: args.h_ref,
        },
        MechanismArg::Rr => DetectabilitySpec::RandomizedResponseReduced {
            n: args.n,
            level: args.level,
            h_ref: args.h_ref,
        },
    };
    let cal = calibrate_mechanism(mechanism)?;
    let surrogate = cal.surrogate();
    let curve = [0.1, 0.5, 1.0, 2.0, 5.0]
        .iter()
        .map(|&e| Ok(json!({"eps": e, "alpha": cal.alpha(e)?, "surrogate": surrogate.alpha(e)?})))
        .collect::<Result<Vec<_>>>()?;
    let report = json!({"mechanism": cal.mechanism, "kappa_fit": cal.kappa_fit, "curve": curve});
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.out {
        let mut f = create_file(path)?;
        writeln!(f, "{text}")?;
        f.flush()?;
    }
    writeln!(out, "{text}")?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("spad").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn example_passes_and_is_stable() {
        let (code, a, _) = run_capture(&["example"]);
        assert_eq!(code, 0, "{a}");
        assert!(a.contains("3.308") && a.contains("2.742"), "{a}");
        assert_eq!(run_capture(&["example"]).1, a);
    }

    #[test]
    fn corrupted_constants_fail() {
        let bad = ExampleExpectations {
            bw_welfare: 2.9,
            ..WORKED_EXAMPLE
        };
        let mut out = Vec::new();
        assert!(!example_report(&bad, &mut out).unwrap());
        assert!(String::from_utf8(out).unwrap().contains("mismatch"));
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run_capture(&["example", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["sweep", "a9"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["sweep", "a1", "--seeds", "1"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["verify", "nonsense"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_lists_flags() {
        let (code, text, _) = run_capture(&["sweep", "--help"]);
        assert_eq!(code, 0);
        for flag in ["--seeds", "--out", "--workers", "--axis"] {
            assert!(text.contains(flag), "{flag} missing from {text}");
        }
    }

    #[test]
    fn missing_env_file_is_io_error() {
        assert_eq!(run_capture(&["solve", "--env", "/nonexistent/env.json"]).0, EXIT_IO);
    }

    #[test]
    fn solve_reports_worked_example() {
        let (code, text, _) = run_capture(&["solve"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!((v["metrics"]["B_w"].as_f64().unwrap() - 3.308).abs() < 5e-3, "{text}");
    }

    #[test]
    fn calibrate_gaussian() {
        let (code, text, _) = run_capture(&["calibrate", "--mechanism", "gaussian"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let sigma = DetectabilitySpec::gaussian_sigma(1.0, 1e-5, 1.0);
        assert!((v["kappa_fit"].as_f64().unwrap() - 1.0 / sigma).abs() < 1e-12);
    }
}
