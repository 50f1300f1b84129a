use thiserror::Error;

/// Errors raised across the audit-design library.
#[derive(Debug, Error)]
pub enum AuditError {
    /// An argument lies outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs violate a documented precondition (dimension mismatch, unsupported family, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative solver ran out of iterations.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AuditError>;

pub(crate) fn contract(msg: impl Into<String>) -> AuditError {
    AuditError::Contract(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> AuditError {
    AuditError::Domain(msg.into())
}
