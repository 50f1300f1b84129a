//! Auditor-side design: baseline rules, hypergradients, projections and the bilevel optimizer.

mod baseline;
mod hypergrad;
mod projection;
mod robust;
mod spad;

pub use baseline::{baseline_policy, BaselineKind};
pub use hypergrad::{
    fd_hypergradient, gap_under, hypergradient, hypergradient_at, HypergradMode, Hypergradient, BOUNDARY_TOL,
    DEFAULT_FD_STEP,
};
pub use projection::{project_budget, project_policy, project_simplex};
pub use robust::{robust_spad, RobustOutcome, WeightedType};
pub use spad::{spad, spad_against, OptimTrace, SpadOptions, SpadOutcome, TraceRecord};
