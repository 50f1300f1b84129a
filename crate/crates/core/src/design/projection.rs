use crate::error::Result;
use crate::model::AuditPolicy;

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Clamp to nonnegative, then rescale onto the budget if it is exceeded.
pub fn project_budget(eps: &[f64], eps_tot: f64) -> Vec<f64> {
    let clamped: Vec<f64> = eps.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total > eps_tot {
        clamped.iter().map(|x| x * (eps_tot / total)).collect()
    } else {
        clamped
    }
}

/// Maps an arbitrary `(pi, eps)` pair onto the auditor's feasible set.
pub fn project_policy(pi_raw: &[f64], eps_raw: &[f64], eps_tot: f64) -> Result<AuditPolicy> {
    AuditPolicy::new(project_simplex(pi_raw), project_budget(eps_raw, eps_tot), eps_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_projection() {
        let p = project_simplex(&[0.8, 0.8, -0.2]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15 && p[2] == 0.0);
    }

    #[test]
    fn budget_rescale() {
        assert_eq!(project_budget(&[2.0, 2.0, 2.0], 3.0), vec![1.0, 1.0, 1.0]);
        assert_eq!(project_budget(&[-1.0, 0.5], 3.0), vec![0.0, 0.5]);
    }

    #[test]
    fn feasible_policy_unchanged() {
        let p = project_policy(&[0.2, 0.3, 0.5], &[0.1, 0.1, 0.1], 1.0).unwrap();
        assert_eq!(p.pi(), &[0.2, 0.3, 0.5]);
        assert_eq!(p.eps(), &[0.1, 0.1, 0.1]);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_feasible(v in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
            let p = project_simplex(&v);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let q = project_simplex(&p);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
