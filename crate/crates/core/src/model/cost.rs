use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Finite stand-in for an unbounded second derivative.
pub const CURVATURE_CAP: f64 = 1e12;

/// Mitigation cost `c(m)` of one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CostSpec {
    /// `c(m) = m^p / p` with `p > 1`; `p = 2` is the quadratic cost.
    PowerLaw { p: f64 },
}

impl CostSpec {
    pub fn power(p: f64) -> Self {
        CostSpec::PowerLaw { p }
    }

    pub fn quadratic() -> Self {
        CostSpec::PowerLaw { p: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let CostSpec::PowerLaw { p } = *self;
        if p.is_finite() && p > 1.0 {
            Ok(())
        } else {
            Err(domain(format!("power-law cost needs p > 1, got {p}")))
        }
    }

    pub fn is_strictly_convex(&self) -> bool {
        let CostSpec::PowerLaw { p } = *self;
        p > 1.0
    }

    pub fn value(&self, m: f64) -> f64 {
        let CostSpec::PowerLaw { p } = *self;
        if p == 2.0 {
            0.5 * m * m
        } else {
            m.powf(p) / p
        }
    }

    /// `(c, c', c'')`, with `c''` capped at [`CURVATURE_CAP`].
    pub fn eval(&self, m: f64) -> (f64, f64, f64) {
        let CostSpec::PowerLaw { p } = *self;
        if p == 2.0 {
            return (0.5 * m * m, m, 1.0);
        }
        let c1 = m.powf(p - 1.0);
        let c2 = if m == 0.0 && p < 2.0 {
            CURVATURE_CAP
        } else {
            ((p - 1.0) * m.powf(p - 2.0)).min(CURVATURE_CAP)
        };
        (m.powf(p) / p, c1, c2)
    }

    /// Inverse marginal cost: the `m >= 0` with `c'(m) = slope`.
    pub fn marginal_inverse(&self, slope: f64) -> f64 {
        let CostSpec::PowerLaw { p } = *self;
        if slope <= 0.0 {
            0.0
        } else {
            slope.powf(1.0 / (p - 1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn quadratic_value() {
        assert_eq!(CostSpec::quadratic().eval(0.375).0, 0.0703125);
    }

    #[test]
    fn cubic_values() {
        let (c, c1, c2) = CostSpec::power(3.0).eval(1.0);
        assert_relative_eq!(c, 1.0 / 3.0);
        assert_eq!((c1, c2), (1.0, 2.0));
    }

    #[test]
    fn zero_effort_costs_nothing() {
        for p in [1.5, 2.0, 3.0] {
            assert_eq!(CostSpec::power(p).eval(0.0).0, 0.0);
        }
    }

    #[test]
    fn curvature_cap_at_origin() {
        assert_eq!(CostSpec::power(1.5).eval(0.0).2, CURVATURE_CAP);
        assert_eq!(CostSpec::power(3.0).eval(0.0).2, 0.0);
    }

    #[test]
    fn rejects_non_convex_exponent() {
        assert!(CostSpec::power(1.0).validate().is_err());
        assert!(CostSpec::power(0.5).validate().is_err());
    }

    proptest! {
        #[test]
        fn derivatives_consistent(p in 1.2f64..4.0, m in 0.05f64..5.0) {
            let spec = CostSpec::power(p);
            let (_, c1, c2) = spec.eval(m);
            let h = 1e-6;
            let fd1 = (spec.value(m + h) - spec.value(m - h)) / (2.0 * h);
            prop_assert!((c1 - fd1).abs() <= 1e-6 * c1.max(1.0));
            prop_assert!(c2 >= 0.0);
            prop_assert!((spec.marginal_inverse(c1) - m).abs() <= 1e-10 * m.max(1.0));
        }
    }
}
