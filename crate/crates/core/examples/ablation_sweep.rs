//! A small ablation sweep over the privacy budget, written as CSV and summarized.
//!
//! Usage: `cargo run --release --example ablation_sweep [seeds] [out_dir]`

use std::fs::{self, File};
use std::path::PathBuf;

use spad_audit::bench::{run_ablation, summarize, write_rows_csv, write_summary_csv, AblationOptions, Axis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seeds: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "target/ablation_example".into()));

    let opts = AblationOptions { seeds, ..AblationOptions::default() };
    let rows = run_ablation(Axis::A1, &opts)?;
    let failed = rows.iter().filter(|r| !r.converged).count();
    println!("{} cells, {failed} without metrics", rows.len());

    let summary = summarize(&rows)?;
    fs::create_dir_all(&out_dir)?;
    write_rows_csv(&rows, File::create(out_dir.join("rows.csv"))?)?;
    write_summary_csv(&summary, File::create(out_dir.join("summary.csv"))?)?;

    println!("\n{:<6} {:<32} {:>5} {:>9} {:>18} {:>9}", "axis", "setting", "vs", "mean %", "95% CI", "p (Holm)");
    for s in &summary {
        let ci = format!("[{:.2}, {:.2}]", s.ci_lo, s.ci_hi);
        println!(
            "{:<6} {:<32} {:>5} {:>9.2} {:>18} {:>9.4}",
            s.axis, s.config, s.rule_b, s.mean_reduction_pct, ci, s.p_holm
        );
    }
    println!("\nwritten to {}", out_dir.display());
    Ok(())
}
