//! Penalized covariance regression for grouped multivariate data.
//!
//! Each subject contributes `T_i` observations of a `p`-vector response and
//! a covariate vector `x_i`. The model seeks a projection `gamma` under which
//! the log projected variance is linear in the covariates,
//! `log(gamma' Sigma_i gamma) = x_i' beta`, with a sparsity penalty on `beta`.
//!
//! The library is generic over the scalar type (`f32` or `f64`) through
//! [`Real`]; the aliases at the crate root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimate;
pub mod infer;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use estimate::{FitConfig, LambdaChoice, PenaltyKind};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type SubjectData = data::SubjectData<f64>;
pub type Dataset = data::Dataset<f64>;
pub type Moments = data::Moments<f64>;
pub type Projection = data::Projection<f64>;
pub type Coefficients = estimate::Coefficients<f64>;
pub type PenaltySpec = estimate::PenaltySpec<f64>;
pub type ModelFit = estimate::ModelFit<f64>;
pub type ComponentSet = estimate::ComponentSet<f64>;
