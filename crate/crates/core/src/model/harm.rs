use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Residual harm left in a dimension after mitigation effort `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HarmResponseSpec {
    /// `g(h, m) = h * exp(-beta * m)`.
    ExponentialDecay { beta: f64 },
    /// `g(h, m) = max(h - gamma * m, 0)`. Convex but not strictly convex.
    LinearClamp { gamma: f64 },
}

impl HarmResponseSpec {
    pub fn exponential(beta: f64) -> Self {
        HarmResponseSpec::ExponentialDecay { beta }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = match *self {
            HarmResponseSpec::ExponentialDecay { beta } => beta,
            HarmResponseSpec::LinearClamp { gamma } => gamma,
        };
        if rate.is_finite() && rate > 0.0 {
            Ok(())
        } else {
            Err(domain(format!("harm response rate must be positive: {self:?}")))
        }
    }

    pub fn is_strictly_convex(&self) -> bool {
        matches!(self, HarmResponseSpec::ExponentialDecay { .. })
    }

    /// `(g, dg/dm, d2g/dm2)`. At the clamp kink the right derivatives (both zero) are reported.
    pub fn eval(&self, h: f64, m: f64) -> (f64, f64, f64) {
        match *self {
            HarmResponseSpec::ExponentialDecay { beta } => {
                let g = h * (-beta * m).exp();
                (g, -beta * g, beta * beta * g)
            }
            HarmResponseSpec::LinearClamp { gamma } => {
                if m < h / gamma {
                    (h - gamma * m, -gamma, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }

    /// Marginal effectiveness `|dg/dm|` at zero effort; an upper bound on `|dg/dm|` everywhere.
    pub fn initial_slope(&self, h: f64) -> f64 {
        match *self {
            HarmResponseSpec::ExponentialDecay { beta } => beta * h,
            HarmResponseSpec::LinearClamp { gamma } => gamma,
        }
    }

    /// Mitigation level where the clamp hits zero, if any.
    pub(crate) fn kink(&self, h: f64) -> Option<f64> {
        match *self {
            HarmResponseSpec::LinearClamp { gamma } => Some(h / gamma),
            HarmResponseSpec::ExponentialDecay { .. } => None,
        }
    }
}
