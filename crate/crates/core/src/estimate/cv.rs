use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, domain};
use crate::scalar::Real;

use super::beta::solve_penalized;
use super::glm::ProjectedGlm;
use super::{PenaltyKind, PenaltySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary<T> {
    /// Decreasing grid.
    pub lambdas: Vec<T>,
    /// Held-out negative log-likelihood summed over folds.
    pub cv_loss: Vec<T>,
    pub chosen: T,
    pub folds: usize,
}

/// Noise level of the score: under the model each coordinate of the
/// gradient has variance `1/2 sum_i T_i x_ij^2`, so this is the Gaussian
/// universal threshold `sd * sqrt(2 ln q)` maximized over penalized columns.
pub fn universal_lambda<T: Real>(x: &Matrix<T>, weights: &[T], penalty: &PenaltySpec<T>) -> T {
    let q = x.cols();
    if q < 2 {
        return T::zero();
    }
    let lnq = T::from_usize_lossy(q).ln();
    let first = match penalty.kind {
        PenaltyKind::Lasso => penalty.first_penalized(),
        PenaltyKind::Generalized => 1,
    };
    (first..q)
        .map(|j| {
            let s: T = (0..x.rows())
                .map(|i| weights[i] * x[(i, j)] * x[(i, j)])
                .sum();
            (lnq * s).sqrt()
        })
        .fold(T::zero(), T::max)
}

/// Smallest lasso lambda at which every penalized coefficient is zero.
pub fn lambda_max<T: Real>(glm: &ProjectedGlm<T>, penalty: &PenaltySpec<T>) -> Result<T> {
    let q = glm.q();
    let first = penalty.first_penalized();
    let mut beta = vec![T::zero(); q];
    if first == 1 {
        beta[0] = glm.null_intercept();
    }
    let grad = glm.gradient(&beta)?;
    Ok(grad[first.min(q)..]
        .iter()
        .fold(T::zero(), |m, g| m.max(g.abs())))
}

/// Chooses lambda on a log-spaced grid by K-fold cross-validated
/// negative log-likelihood, folds formed over subjects. The chosen lambda
/// is on the scale of `glm`; each training fold applies it rescaled by its
/// share of the total weight.
///
/// For the generalized penalty the grid tops out at `10 * fallback_top`
/// (there is no closed-form lambda_max).
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_lambda<T: Real>(
    glm: &ProjectedGlm<T>,
    penalty: &PenaltySpec<T>,
    folds: usize,
    grid_size: usize,
    min_ratio: T,
    fallback_top: T,
    seed: u64,
    tol: T,
) -> Result<CvSummary<T>> {
    let n = glm.n();
    if folds < 2 || folds > n {
        return Err(Error::Config(format!("cv folds must be in 2..={n}, got {folds}")));
    }
    if grid_size == 0 || !(min_ratio > T::zero() && min_ratio < T::one()) {
        return Err(Error::Config("cv grid needs size >= 1 and min_ratio in (0,1)".into()));
    }
    let top = match penalty.kind {
        PenaltyKind::Lasso => lambda_max(glm, penalty)?,
        PenaltyKind::Generalized => T::lit(10.0) * fallback_top,
    };
    if !(top > T::zero()) {
        return Ok(CvSummary {
            lambdas: vec![T::zero()],
            cv_loss: vec![T::zero()],
            chosen: T::zero(),
            folds,
        });
    }
    let lambdas: Vec<T> = (0..grid_size)
        .map(|k| {
            if grid_size == 1 {
                top
            } else {
                let f = T::from_usize_lossy(k) / T::from_usize_lossy(grid_size - 1);
                top * min_ratio.powf(f)
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[domain::CV_FOLDS]));
    let mut assignment = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }

    let per_fold: Vec<Vec<T>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let train_glm = glm.subset(&train);
            let test_glm = glm.subset(&test);
            let fraction = train_glm.total_weight() / glm.total_weight();
            let mut beta = vec![T::zero(); glm.q()];
            beta[0] = train_glm.null_intercept();
            // Held-out losses only need a few significant digits.
            let path_tol = tol.max(T::lit(1e-6) * train_glm.total_weight());
            // Once the fit saturates the rest of the path is interpolation
            // and is scored as unusable.
            let mut saturated = false;
            lambdas
                .iter()
                .map(|&lam| {
                    if saturated {
                        return T::infinity();
                    }
                    match solve_penalized(&train_glm, &penalty.with_lambda(lam).rescaled(fraction), &beta, path_tol) {
                        Ok(sol) => {
                            beta = sol.beta;
                            let nnz = beta.iter().filter(|v| v.abs() > T::lit(1e-8)).count();
                            if nnz + 1 >= train.len() {
                                saturated = true;
                                return T::infinity();
                            }
                            test_glm.loss(&beta).unwrap_or(T::infinity())
                        }
                        Err(_) => T::infinity(),
                    }
                })
                .collect()
        })
        .collect();

    let cv_loss: Vec<T> = (0..lambdas.len())
        .map(|k| per_fold.iter().map(|f| f[k]).sum())
        .collect();
    let mut best = 0;
    for k in 1..lambdas.len() {
        if cv_loss[k] < cv_loss[best] {
            best = k;
        }
    }
    Ok(CvSummary {
        chosen: lambdas[best],
        lambdas,
        cv_loss,
        folds,
    })
}
