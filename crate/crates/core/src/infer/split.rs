use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Moments, Projection};
use crate::error::{Error, Result};
use crate::estimate::{cross_validate_lambda, refit_unpenalized, solve_penalized, PenaltySpec, ProjectedGlm};
use crate::rng::{self, domain};
use crate::scalar::Real;

use super::{SplitPlan, SUPPORT_THRESHOLD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult<T> {
    /// Selected columns, ascending; always contains the intercept.
    pub support: Vec<usize>,
    /// Entry `j` comes from the refit on `support + {j}`.
    pub beta_tilde: Vec<T>,
    /// Whether each subject landed in the refit half.
    pub membership: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiSplit<T> {
    pub results: Vec<SplitResult<T>>,
    /// Average of `beta_tilde` over splits.
    pub beta_hat: Vec<T>,
}

/// Random partition into a selection half of size `n1` and a refit half,
/// both returned in ascending order. `attempt` selects a fresh stream for
/// retries.
pub fn split_sample(n: usize, plan: &SplitPlan, b: usize, attempt: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(
        plan.rng_seed,
        &[domain::SPLIT, b as u64, attempt as u64],
    ));
    let mut c1 = order[..plan.n1.min(n)].to_vec();
    let mut c2 = order[plan.n1.min(n)..].to_vec();
    c1.sort_unstable();
    c2.sort_unstable();
    (c1, c2)
}

fn support_of<T: Real>(beta: &[T]) -> Vec<usize> {
    let cut = T::lit(SUPPORT_THRESHOLD);
    (0..beta.len()).filter(|&j| j == 0 || beta[j].abs() > cut).collect()
}

fn intercept_start<T: Real>(glm: &ProjectedGlm<T>) -> Vec<T> {
    let mut b = vec![T::zero(); glm.q()];
    b[0] = glm.null_intercept();
    b
}

fn select_on<T: Real>(glm: &ProjectedGlm<T>, penalty: &PenaltySpec<T>, tol: T) -> Result<(Vec<usize>, Vec<T>)> {
    let sol = solve_penalized(glm, penalty, &intercept_start(glm), tol)?;
    Ok((support_of(&sol.beta), sol.beta))
}

/// Lasso support on a subset with the projection fixed; the intercept is
/// always kept.
pub fn select_support<T: Real>(
    moments: &Moments<T>,
    gamma: &Projection<T>,
    penalty: &PenaltySpec<T>,
    tol: T,
) -> Result<Vec<usize>> {
    let glm = ProjectedGlm::from_moments(moments, gamma.as_slice());
    select_on(&glm, penalty, tol).map(|(s, _)| s)
}

/// Unpenalized fit on the listed columns with the projection fixed.
pub fn low_dim_refit<T: Real>(
    moments: &Moments<T>,
    gamma: &Projection<T>,
    columns: &[usize],
    tol: T,
) -> Result<Vec<T>> {
    let glm = ProjectedGlm::from_moments(moments, gamma.as_slice());
    refit_unpenalized(&glm, columns, None, tol)
}

/// Keeps the intercept and the largest-magnitude coefficients so that every
/// refit on `support + {j}` has fewer columns than subjects.
fn cap_support<T: Real>(support: Vec<usize>, beta: &[T], n2: usize) -> Vec<usize> {
    let cap = n2.saturating_sub(2).max(1);
    if support.len() <= cap {
        return support;
    }
    let mut slopes: Vec<usize> = support.into_iter().filter(|&j| j != 0).collect();
    slopes.sort_by(|&a, &b| {
        beta[b]
            .abs()
            .partial_cmp(&beta[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    slopes.truncate(cap - 1);
    let mut kept = vec![0];
    kept.extend(slopes);
    kept.sort_unstable();
    log::debug!("support capped to {} columns", kept.len());
    kept
}

fn split_round<T: Real>(
    glm: &ProjectedGlm<T>,
    penalty: &PenaltySpec<T>,
    plan: &SplitPlan,
    b: usize,
    attempt: usize,
    tol: T,
) -> Result<SplitResult<T>> {
    let n = glm.n();
    let q = glm.q();
    let (c1, c2) = split_sample(n, plan, b, attempt);
    let select_glm = glm.subset(&c1);
    let refit_glm = glm.subset(&c2);

    let penalty = if plan.cv_per_split {
        let cv = cross_validate_lambda(
            &select_glm,
            penalty,
            5.min(c1.len()),
            20,
            T::lit(0.01),
            penalty.lambda,
            rng::derive_seed(plan.rng_seed, &[domain::CV_FOLDS, b as u64, attempt as u64]),
            tol,
        )?;
        penalty.with_lambda(cv.chosen)
    } else {
        penalty.rescaled(select_glm.total_weight() / glm.total_weight())
    };
    let (support, beta_sel) = select_on(&select_glm, &penalty, tol)?;
    let support = cap_support(support, &beta_sel, c2.len());

    let base = refit_unpenalized(&refit_glm, &support, None, tol)?;
    let mut beta_tilde = vec![T::zero(); q];
    for (&j, &v) in support.iter().zip(&base) {
        beta_tilde[j] = v;
    }
    let mut cols = support.clone();
    cols.push(0);
    let mut init = base.clone();
    init.push(T::zero());
    let last = cols.len() - 1;
    for j in (0..q).filter(|j| support.binary_search(j).is_err()) {
        cols[last] = j;
        let fit = refit_unpenalized(&refit_glm, &cols, Some(&init), tol)?;
        beta_tilde[j] = fit[last];
    }
    if beta_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::SplitFailed {
            round: b,
            message: "non-finite refit coefficient".into(),
        });
    }
    let mut membership = vec![false; n];
    for &i in &c2 {
        membership[i] = true;
    }
    Ok(SplitResult {
        support,
        beta_tilde,
        membership,
    })
}

/// `B` split/select/refit rounds and their average. A failed round is
/// retried once on a fresh split; a second failure aborts.
pub fn multi_split<T: Real>(
    moments: &Moments<T>,
    gamma: &Projection<T>,
    penalty: &PenaltySpec<T>,
    plan: &SplitPlan,
    tol: T,
) -> Result<MultiSplit<T>> {
    plan.validate(moments.n())?;
    penalty.validate(moments.q())?;
    let glm = ProjectedGlm::from_moments(moments, gamma.as_slice());
    let rounds: Vec<Result<SplitResult<T>>> = (0..plan.b_splits)
        .into_par_iter()
        .map(|b| {
            split_round(&glm, penalty, plan, b, 0, tol).or_else(|first| {
                log::debug!("split {b} failed ({first}), retrying");
                split_round(&glm, penalty, plan, b, 1, tol).map_err(|e| Error::SplitFailed {
                    round: b,
                    message: e.to_string(),
                })
            })
        })
        .collect();
    let results = rounds.into_iter().collect::<Result<Vec<_>>>()?;
    let beta_hat = split_average(&results);
    Ok(MultiSplit { results, beta_hat })
}

/// Coordinate-wise mean of `beta_tilde` over split rounds.
pub fn split_average<T: Real>(results: &[SplitResult<T>]) -> Vec<T> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    let bf = T::from_usize_lossy(results.len());
    (0..first.beta_tilde.len())
        .map(|j| results.iter().map(|r| r.beta_tilde[j]).sum::<T>() / bf)
        .collect()
}
