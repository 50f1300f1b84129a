//! Seeded synthetic environments, ablation sweeps and their statistics.

mod runner;
mod sampling;
mod stats;

pub use runner::{
    cell_count, run_ablation, run_cell, summarize, write_rows_csv, write_summary_csv, AblationOptions, Axis, ResultRow,
    Rule, SummaryRow, EPS_GRID, ROWS_HEADER, SUMMARY_HEADER,
};
pub use sampling::{
    prior_harm_std, sample_environment, HarmMode, KappaMode, SamplingConfig, WelfareMode, DEFAULT_MASTER_SEED,
    UF_PRE_DRAWS,
};
pub use stats::{
    bootstrap_ci, holm_bonferroni, paired_compare, paired_compare_with, wilcoxon_signed_rank, StatReport,
    DEFAULT_LEVEL, DEFAULT_RESAMPLES, WILCOXON_EXACT_MAX,
};
