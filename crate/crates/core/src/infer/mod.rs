//! Split-and-smooth inference on the regression coefficients with the
//! projection held fixed: repeated sample splitting, lasso selection on one
//! half, unpenalized refits on the other, averaging over splits, and an
//! infinitesimal-jackknife variance for the averaged estimator.

mod normal;
mod report;
mod split;
mod variance;

use serde::{Deserialize, Serialize};

use crate::data::{Moments, Projection};
use crate::error::{Error, Result};
use crate::estimate::PenaltySpec;
use crate::scalar::Real;

pub use normal::{intervals_and_pvalues, normal_cdf, normal_quantile, SmoothedInference};
pub use report::{InferenceMetadata, InferenceReport, InferenceRow};
pub use split::{low_dim_refit, multi_split, select_support, split_average, split_sample, MultiSplit, SplitResult};
pub use variance::{ij_variance, VarianceEstimate};

/// Coefficients at or below this magnitude count as unselected.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Size of the selection half.
    pub n1: usize,
    /// Size of the refit half.
    pub n2: usize,
    pub b_splits: usize,
    pub rng_seed: u64,
    /// Re-choose lambda by cross-validation inside every selection half
    /// instead of reusing the full-data value.
    #[serde(default)]
    pub cv_per_split: bool,
}

impl SplitPlan {
    /// Even split, `n1 = floor(n/2)`.
    pub fn new(n: usize, b_splits: usize, rng_seed: u64) -> Self {
        Self::with_n1(n, n / 2, b_splits, rng_seed)
    }

    pub fn with_n1(n: usize, n1: usize, b_splits: usize, rng_seed: u64) -> Self {
        SplitPlan {
            n1,
            n2: n.saturating_sub(n1),
            b_splits,
            rng_seed,
            cv_per_split: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::Config(format!(
                "split sizes {}+{} do not add up to n={n}",
                self.n1, self.n2
            )));
        }
        if self.n1 < 1 || self.n2 < 2 {
            return Err(Error::Config(format!(
                "split needs n1 >= 1 and n2 >= 2, got n1={} n2={}",
                self.n1, self.n2
            )));
        }
        if self.b_splits < 1 {
            return Err(Error::Config("B must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything produced by one inference run.
#[derive(Clone, Debug)]
pub struct InferenceRun<T> {
    pub splits: MultiSplit<T>,
    pub variance: VarianceEstimate<T>,
    pub smoothed: SmoothedInference<T>,
}

/// Multi-split estimate, IJ variance and intervals in one call.
pub fn infer<T: Real>(
    moments: &Moments<T>,
    gamma: &Projection<T>,
    penalty: &PenaltySpec<T>,
    plan: &SplitPlan,
    alpha: f64,
    tol: T,
) -> Result<InferenceRun<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if plan.b_splits < 2 {
        return Err(Error::Config("B>=2 required for the variance estimate".into()));
    }
    let splits = multi_split(moments, gamma, penalty, plan, tol)?;
    let variance = ij_variance(&splits.results, &splits.beta_hat, plan)?;
    let smoothed = intervals_and_pvalues(&splits.beta_hat, &variance.v_hat, alpha);
    Ok(InferenceRun {
        splits,
        variance,
        smoothed,
    })
}
