use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{Moments, Projection};
use crate::error::{Error, Result};
use crate::linalg::{norm2, solve_lower_transpose};
use crate::rng::{self, domain};
use crate::scalar::Real;

use super::beta::solve_penalized;
use super::cv::{cross_validate_lambda, universal_lambda, CvSummary};
use super::gamma::{gamma_matrix, smallest_generalized_eigenpair};
use super::glm::ProjectedGlm;
use super::objective::penalty_value;
use super::{Coefficients, FitConfig, LambdaChoice, ModelFit, PenaltySpec};

/// A fit together with the cross-validation record that chose its lambda.
#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    pub fit: ModelFit<T>,
    pub cv: Option<CvSummary<T>>,
}

/// Alternating minimization from `config.restarts` random initializations;
/// the restart with the smallest final objective wins (lowest index on ties).
/// A half-step whose result raises the computed objective is discarded.
pub fn fit<T: Real>(
    moments: &Moments<T>,
    penalty: &PenaltySpec<T>,
    config: &FitConfig,
) -> Result<ModelFit<T>> {
    config.validate()?;
    penalty.validate(moments.q())?;
    let outcomes: Vec<Result<ModelFit<T>>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(moments, penalty, config, r))
        .collect();
    let mut best: Option<ModelFit<T>> = None;
    let mut diagnostics = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(f) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| f.final_objective() < b.final_objective());
                if better {
                    best = Some(f);
                }
            }
            Err(e) => diagnostics.push(format!("restart {r}: {e}")),
        }
    }
    best.ok_or(Error::AllRestartsFailed { diagnostics })
}

/// Uniform draw on the H-unit ellipsoid: `L^{-T} u` with `H = L L'` and `u`
/// uniform on the unit sphere.
fn initial_gamma<T: Real>(moments: &Moments<T>, seed: u64, restart: usize) -> Result<Projection<T>> {
    let l = moments.pooled().cholesky().ok_or(Error::SingularPooled)?;
    let mut rng = rng::stream(seed, &[domain::RESTART, restart as u64]);
    for _ in 0..16 {
        let u: Vec<T> = (0..moments.dim())
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::lit(v)
            })
            .collect();
        let norm = norm2(&u);
        if norm > T::zero() {
            let unit: Vec<T> = u.into_iter().map(|v| v / norm).collect();
            return Ok(Projection::new(solve_lower_transpose(&l, &unit)));
        }
    }
    Err(Error::SingularPooled)
}

fn full_objective<T: Real>(
    glm: &ProjectedGlm<T>,
    penalty: &PenaltySpec<T>,
    beta: &[T],
) -> Result<T> {
    Ok(glm.loss(beta)? + penalty.lambda * penalty_value(penalty, beta))
}

fn run_restart<T: Real>(
    moments: &Moments<T>,
    penalty: &PenaltySpec<T>,
    config: &FitConfig,
    restart: usize,
) -> Result<ModelFit<T>> {
    let tol = T::lit(config.beta_solver_tol);
    let mut gamma = initial_gamma(moments, config.rng_seed, restart)?;
    let q = moments.q();

    // beta^(0): zero slopes, intercept at the log mean projected variance.
    let variances = moments.projected_variances(gamma.as_slice());
    let mean_var = variances.iter().copied().sum::<T>() / T::from_usize_lossy(variances.len());
    let mut beta = vec![T::zero(); q];
    beta[0] = mean_var.ln();

    let mut glm = ProjectedGlm::from_moments(moments, gamma.as_slice());
    let mut current = full_objective(&glm, penalty, &beta)?;
    let mut trace = vec![current];
    let mut converged = false;

    for _ in 0..config.max_outer_iters {
        let previous = current;

        let sol = solve_penalized(&glm, penalty, &beta, tol)?;
        let candidate = full_objective(&glm, penalty, &sol.beta)?;
        if candidate <= current {
            beta = sol.beta;
            current = candidate;
        }
        trace.push(current);

        let a = gamma_matrix(moments, &beta)?;
        let (_, g) = smallest_generalized_eigenpair(&a, moments.pooled())?;
        let next_glm = ProjectedGlm::from_moments(moments, &g);
        let candidate = full_objective(&next_glm, penalty, &beta)?;
        if candidate <= current {
            gamma = Projection::new(g);
            glm = next_glm;
            current = candidate;
        }
        trace.push(current);

        if (previous - current).abs() <= T::lit(config.outer_tol) * current.abs().max(T::one()) {
            converged = true;
            break;
        }
    }

    Ok(ModelFit {
        gamma,
        beta: Coefficients::new(beta),
        objective_trace: trace,
        converged,
        restart_index: restart,
        lambda: penalty.lambda,
    })
}

/// Fits with a fixed lambda, or chooses lambda by K-fold cross-validation.
///
/// Cross-validation needs a projection, so a pilot fit at the universal
/// threshold `max_j sqrt(ln(q) sum_i T_i x_ij^2)` supplies one; lambda is
/// then cross-validated along a warm-started path with that projection held
/// fixed, and the final fit is rerun from fresh restarts.
pub fn fit_with_choice<T: Real>(
    moments: &Moments<T>,
    penalty: &PenaltySpec<T>,
    choice: &LambdaChoice,
    config: &FitConfig,
) -> Result<FitOutcome<T>> {
    match *choice {
        LambdaChoice::Fixed(lambda) => {
            if !lambda.is_finite() || lambda < 0.0 {
                return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
            }
            let fit = fit(moments, &penalty.with_lambda(T::lit(lambda)), config)?;
            Ok(FitOutcome { fit, cv: None })
        }
        LambdaChoice::CrossValidated {
            folds,
            grid_size,
            min_ratio,
        } => {
            let pilot_lambda = universal_lambda(moments.design(), moments.weights(), penalty);
            let pilot = fit(moments, &penalty.with_lambda(pilot_lambda), config)?;
            let glm = ProjectedGlm::from_moments(moments, pilot.gamma.as_slice());
            let cv = cross_validate_lambda(
                &glm,
                penalty,
                folds,
                grid_size,
                T::lit(min_ratio),
                pilot_lambda,
                config.rng_seed,
                T::lit(config.beta_solver_tol),
            )?;
            let fit = fit(moments, &penalty.with_lambda(cv.chosen), config)?;
            Ok(FitOutcome { fit, cv: Some(cv) })
        }
    }
}
