use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectData};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

use super::{Mode, ScenarioSpec};

/// Orthonormal basis whose first column is the normalized ones vector.
///
/// Column `j >= 1` has `1/sqrt(p)` in coordinate 0, `c - 1` in coordinate
/// `j` and `c` elsewhere, with `c = a^2/(1+a)`, `a = 1/sqrt(p)`. For `p = 5`
/// columns 1 and 2 are `(0.447, -0.862, 0.138, 0.138, 0.138)` and its
/// permutation.
pub fn default_eigvecs(p: usize) -> Matrix<f64> {
    let a = 1.0 / (p as f64).sqrt();
    let c = a * a / (1.0 + a);
    let mut m = Matrix::zeros(p, p);
    for i in 0..p {
        m[(i, 0)] = a;
    }
    for j in 1..p {
        m[(0, j)] = a;
        for i in 1..p {
            m[(i, j)] = if i == j { c - 1.0 } else { c };
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthComponent {
    pub name: String,
    pub column: usize,
    /// Unit-norm true eigenvector.
    pub gamma: Vec<f64>,
    /// Full coefficient vector including the drawn intercept.
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub eigvecs: Matrix<f64>,
    pub components: Vec<TruthComponent>,
}

/// `T` draws from `N(0, Gamma diag(lambda) Gamma')`, where signal columns get
/// `lambda = exp(x'beta)` and the rest lognormal noise.
pub fn generate_subject<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    truth: &Truth,
    x: Vec<f64>,
    rng: &mut R,
) -> Result<SubjectData<f64>> {
    let p = spec.p;
    let noise = Normal::new(0.0, spec.lognormal_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut log_lambda: Vec<f64> = (0..p).map(|_| noise.sample(rng)).collect();
    for c in &truth.components {
        let eta = dot(&x, &c.beta);
        if !(eta.abs() <= 700.0) {
            return Err(Error::Overflow {
                subject: 0,
                exponent: eta,
            });
        }
        log_lambda[c.column] = eta;
    }
    let scale: Vec<f64> = log_lambda.iter().map(|l| (0.5 * l).exp()).collect();
    let mut y = Matrix::zeros(spec.t_obs, p);
    let mut z = vec![0.0; p];
    for t in 0..spec.t_obs {
        for (k, zk) in z.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *zk = scale[k] * e;
        }
        let row = truth.eigvecs.mat_vec(&z);
        y.row_mut(t).copy_from_slice(&row);
    }
    SubjectData::new(y, x)
}

/// A fresh dataset and its ground truth: covariates `(1, N(0, I_{q-1}))`,
/// intercepts drawn uniformly from `intercept_range` per signal component.
pub fn generate_dataset<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<(Dataset<f64>, Truth)> {
    spec.validate()?;
    let eigvecs = spec.eigvecs();
    let (lo, hi) = spec.intercept_range;
    let components = match spec.mode {
        Mode::Null => Vec::new(),
        Mode::Alternative => spec
            .components
            .iter()
            .map(|c| {
                let mut beta = vec![0.0; spec.q];
                beta[0] = if lo < hi {
                    Uniform::new(lo, hi).sample(rng)
                } else {
                    lo
                };
                for &(j, v) in &c.active {
                    beta[j] = v;
                }
                TruthComponent {
                    name: c.name.clone(),
                    column: c.column,
                    gamma: eigvecs.column(c.column),
                    beta,
                }
            })
            .collect(),
    };
    let truth = Truth {
        eigvecs,
        components,
    };
    let mut subjects = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut x = Vec::with_capacity(spec.q);
        x.push(1.0);
        x.extend((1..spec.q).map(|_| -> f64 { StandardNormal.sample(rng) }));
        let subject = generate_subject(spec, &truth, x, rng).map_err(|e| match e {
            Error::Overflow { exponent, .. } => Error::Overflow { subject: i, exponent },
            other => other,
        })?;
        subjects.push(subject);
    }
    Ok((Dataset::new(subjects)?, truth))
}
