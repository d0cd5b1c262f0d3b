use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{SplitPlan, SplitResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate<T> {
    /// Bias-corrected variance, negative values truncated to zero.
    pub v_hat: Vec<T>,
    /// Coordinates whose raw estimate was negative.
    pub truncated: Vec<bool>,
    /// Raw (possibly negative) estimate.
    pub raw: Vec<T>,
    /// Same construction with the split covariances summed unsquared.
    pub unsquared: Vec<T>,
}

/// Infinitesimal-jackknife variance of the split-averaged estimator.
///
/// With `N_ib` the refit-half indicator, `cov_ij = 1/B sum_b (N_ib - mean_b
/// N_ib)(bt_jb - bh_j)` and
/// `V_j = (n-1)/n (n/(n-n1))^2 sum_i cov_ij^2
///        - n/B^2 n1/(n-n1) sum_b (bt_jb - bh_j)^2`.
pub fn ij_variance<T: Real>(
    results: &[SplitResult<T>],
    beta_hat: &[T],
    plan: &SplitPlan,
) -> Result<VarianceEstimate<T>> {
    let b_count = results.len();
    if b_count < 2 {
        return Err(Error::Config("B>=2 required for the variance estimate".into()));
    }
    let n = plan.n();
    let q = beta_hat.len();
    let nf = T::from_usize_lossy(n);
    let n1 = T::from_usize_lossy(plan.n1);
    let bf = T::from_usize_lossy(b_count);
    let ratio = nf / (nf - n1);
    let lead = (nf - T::one()) / nf * ratio * ratio;
    let correction = nf / (bf * bf) * (n1 / (nf - n1));

    for r in results {
        if r.membership.len() != n || r.beta_tilde.len() != q {
            return Err(Error::Config("split results do not match the plan".into()));
        }
    }

    let centered_membership: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mean = results
                .iter()
                .map(|r| if r.membership[i] { T::one() } else { T::zero() })
                .sum::<T>()
                / bf;
            results
                .iter()
                .map(|r| if r.membership[i] { T::one() } else { T::zero() } - mean)
                .collect()
        })
        .collect();

    let mut v_hat = Vec::with_capacity(q);
    let mut raw = Vec::with_capacity(q);
    let mut unsquared = Vec::with_capacity(q);
    let mut truncated = Vec::with_capacity(q);
    for (j, &bj) in beta_hat.iter().enumerate().take(q) {
        let dev: Vec<T> = results.iter().map(|r| r.beta_tilde[j] - bj).collect();
        let mut sum_sq = T::zero();
        let mut sum_plain = T::zero();
        for cm in &centered_membership {
            let cov = cm.iter().zip(&dev).map(|(&a, &d)| a * d).sum::<T>() / bf;
            sum_sq += cov * cov;
            sum_plain += cov;
        }
        let spread: T = dev.iter().map(|&d| d * d).sum();
        let v = lead * sum_sq - correction * spread;
        raw.push(v);
        unsquared.push(lead * sum_plain - correction * spread);
        truncated.push(v < T::zero());
        v_hat.push(v.max(T::zero()));
    }
    let flagged = truncated.iter().filter(|&&t| t).count();
    if flagged > 0 {
        log::debug!("{flagged} coordinate(s) had a negative variance estimate, truncated to 0");
    }
    Ok(VarianceEstimate {
        v_hat,
        truncated,
        raw,
        unsquared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(beta_tilde: Vec<f64>, membership: Vec<bool>) -> SplitResult<f64> {
        SplitResult {
            support: vec![0],
            beta_tilde,
            membership,
        }
    }

    #[test]
    fn constant_estimates_give_zero() {
        let plan = SplitPlan::with_n1(4, 2, 3, 0);
        let rs = vec![
            result(vec![1.0, 2.0], vec![true, true, false, false]),
            result(vec![1.0, 2.0], vec![false, true, true, false]),
            result(vec![1.0, 2.0], vec![true, false, false, true]),
        ];
        let v = ij_variance(&rs, &[1.0, 2.0], &plan).unwrap();
        assert_eq!(v.v_hat, vec![0.0, 0.0]);
        assert!(v.truncated.iter().all(|t| !t));
    }

    #[test]
    fn single_split_is_rejected() {
        let plan = SplitPlan::with_n1(4, 2, 1, 0);
        let rs = vec![result(vec![1.0], vec![true, true, false, false])];
        assert!(ij_variance(&rs, &[1.0], &plan).is_err());
    }
}
