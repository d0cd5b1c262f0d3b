//! Penalized joint estimation of the coefficient vector `beta` and the
//! projection `gamma` by block coordinate descent.
//!
//! The objective is the negative log-likelihood of the projected responses
//! `gamma' y_it` under `log(gamma' Sigma_i gamma) = x_i' beta`, plus an l1 or
//! generalized-l1 penalty on `beta`, subject to `gamma' H gamma = 1`.

mod beta;
mod components;
mod cv;
mod fit;
mod gamma;
mod glm;
mod objective;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub use beta::{beta_step, refit_unpenalized, solve_penalized, BetaSolution};
pub use components::{dfd, fit_deflated, select_components, ComponentSet};
pub use cv::{cross_validate_lambda, lambda_max, universal_lambda, CvSummary};
pub use fit::{fit, fit_with_choice, FitOutcome};
pub use gamma::{gamma_step, smallest_generalized_eigenpair};
pub use glm::ProjectedGlm;
pub use objective::{objective, penalty_value};

/// Regression coefficients; `beta[0]` is the intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients<T> {
    pub beta: Vec<T>,
}

impl<T: Real> Coefficients<T> {
    pub fn new(beta: Vec<T>) -> Self {
        Self { beta }
    }

    pub fn zeros(q: usize) -> Self {
        Self {
            beta: vec![T::zero(); q],
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.beta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Lasso,
    Generalized,
}

/// `lambda * ||beta||_1` (lasso) or `lambda * ||D beta||_1` (generalized).
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltySpec<T> {
    pub kind: PenaltyKind,
    pub lambda: T,
    pub d: Option<Matrix<T>>,
    /// Only consulted for the lasso; a generalized penalty applies `D` as given.
    pub penalize_intercept: bool,
}

impl<T: Real> PenaltySpec<T> {
    pub fn lasso(lambda: T) -> Self {
        Self {
            kind: PenaltyKind::Lasso,
            lambda,
            d: None,
            penalize_intercept: false,
        }
    }

    pub fn generalized(lambda: T, d: Matrix<T>) -> Self {
        Self {
            kind: PenaltyKind::Generalized,
            lambda,
            d: Some(d),
            penalize_intercept: false,
        }
    }

    pub fn unpenalized() -> Self {
        Self::lasso(T::zero())
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    /// Same penalty level per unit of weight on a subset that carries
    /// `fraction` of the full data's total weight.
    pub fn rescaled(&self, fraction: T) -> Self {
        self.with_lambda(self.lambda * fraction)
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        match (self.kind, &self.d) {
            (PenaltyKind::Lasso, _) => Ok(()),
            (PenaltyKind::Generalized, Some(d)) if d.cols() == q => Ok(()),
            (PenaltyKind::Generalized, Some(d)) => Err(Error::Config(format!(
                "penalty matrix D has {} columns, expected q={q}",
                d.cols()
            ))),
            (PenaltyKind::Generalized, None) => Err(Error::Config(
                "generalized penalty requires a D matrix".into(),
            )),
        }
    }

    /// First coordinate subject to the lasso penalty.
    pub(crate) fn first_penalized(&self) -> usize {
        usize::from(!self.penalize_intercept)
    }
}

/// How `lambda` is chosen for a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    CrossValidated {
        folds: usize,
        grid_size: usize,
        min_ratio: f64,
    },
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::CrossValidated {
            folds: 5,
            grid_size: 20,
            min_ratio: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_outer_iters: usize,
    pub beta_solver_tol: f64,
    pub outer_tol: f64,
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_outer_iters: 100,
            beta_solver_tol: 1e-8,
            outer_tol: 1e-6,
            rng_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if !(self.beta_solver_tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Result of the alternating minimization for one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFit<T> {
    pub gamma: crate::data::Projection<T>,
    pub beta: Coefficients<T>,
    /// Objective after initialization and after every half-step.
    pub objective_trace: Vec<T>,
    pub converged: bool,
    pub restart_index: usize,
    pub lambda: T,
}

impl<T: Real> ModelFit<T> {
    pub fn final_objective(&self) -> T {
        *self.objective_trace.last().expect("trace is never empty")
    }

    /// Largest increase between consecutive trace entries (zero or negative
    /// for a monotone trace).
    pub fn max_objective_increase(&self) -> T {
        self.objective_trace
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::neg_infinity(), T::max)
            .max(T::zero())
    }
}
