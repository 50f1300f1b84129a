// `!(x > 0.0)` is used on purpose so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod design;
pub mod error;
pub mod lower;
pub mod model;
pub mod rng;
pub mod special;
pub mod verify;

pub use error::{AuditError, Result};

pub use design::{robust_spad, spad, spad_against, SpadOptions, SpadOutcome};
pub use lower::{best_response, solve_fs, BestResponse, DeveloperType};
pub use model::{compute_metrics, AuditMetrics, AuditPolicy, Environment};
