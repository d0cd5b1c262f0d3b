use crate::data::Moments;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// The beta-subproblem for a fixed projection: a log-link gamma-type GLM
/// with responses `z_i = T_i gamma' S_i gamma` and weights `T_i`.
///
/// Smooth loss: `1/2 sum_i (T_i x_i'beta + z_i exp(-x_i'beta))`.
#[derive(Clone, Debug)]
pub struct ProjectedGlm<T> {
    rows: Matrix<T>,
    cols: Vec<Vec<T>>,
    z: Vec<T>,
    t: Vec<T>,
}

impl<T: Real> ProjectedGlm<T> {
    pub fn new(x: Matrix<T>, z: Vec<T>, t: Vec<T>) -> Self {
        assert_eq!(x.rows(), z.len());
        assert_eq!(x.rows(), t.len());
        let cols = (0..x.cols()).map(|j| x.column(j)).collect();
        Self { rows: x, cols, z, t }
    }

    pub fn from_moments(m: &Moments<T>, gamma: &[T]) -> Self {
        Self::new(m.design().clone(), m.responses(gamma), m.weights().to_vec())
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn q(&self) -> usize {
        self.cols.len()
    }

    pub fn design(&self) -> &Matrix<T> {
        &self.rows
    }

    pub(crate) fn column(&self, j: usize) -> &[T] {
        &self.cols[j]
    }

    pub fn responses(&self) -> &[T] {
        &self.z
    }

    pub fn weights(&self) -> &[T] {
        &self.t
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let rows: Vec<Vec<T>> = idx.iter().map(|&i| self.rows.row(i).to_vec()).collect();
        Self::new(
            Matrix::from_rows(&rows),
            idx.iter().map(|&i| self.z[i]).collect(),
            idx.iter().map(|&i| self.t[i]).collect(),
        )
    }

    /// Restriction to a subset of columns (in the given order).
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut x = Matrix::zeros(self.n(), cols.len());
        for (c, &j) in cols.iter().enumerate() {
            for i in 0..self.n() {
                x[(i, c)] = self.cols[j][i];
            }
        }
        Self::new(x, self.z.clone(), self.t.clone())
    }

    pub fn linear_predictor(&self, beta: &[T]) -> Vec<T> {
        (0..self.n()).map(|i| dot(self.rows.row(i), beta)).collect()
    }

    pub fn total_weight(&self) -> T {
        self.t.iter().copied().sum()
    }

    /// Intercept minimizing the loss with all other coefficients at zero:
    /// `log(sum z / sum T)`.
    pub fn null_intercept(&self) -> T {
        let zs: T = self.z.iter().copied().sum();
        (zs / self.total_weight()).ln()
    }

    /// Per-subject `exp(-eta_i)`, erroring when the exponent exceeds the
    /// allowed range. Very negative exponents are clamped.
    pub fn inverse_means(&self, eta: &[T]) -> Result<Vec<T>> {
        let limit = T::lit(T::EXP_LIMIT);
        eta.iter()
            .enumerate()
            .map(|(i, &e)| {
                let arg = -e;
                if !(arg <= limit) {
                    return Err(Error::Overflow {
                        subject: i,
                        exponent: arg.to_f64_lossy(),
                    });
                }
                Ok(arg.max(-limit).exp())
            })
            .collect()
    }

    pub fn loss_at(&self, eta: &[T]) -> Result<T> {
        let inv = self.inverse_means(eta)?;
        let mut acc = T::zero();
        for i in 0..self.n() {
            acc += self.t[i] * eta[i] + self.z[i] * inv[i];
        }
        Ok(T::lit(0.5) * acc)
    }

    pub fn loss(&self, beta: &[T]) -> Result<T> {
        self.loss_at(&self.linear_predictor(beta))
    }

    /// Per-subject derivative of the loss with respect to `eta_i`:
    /// `1/2 (T_i - z_i exp(-eta_i))`.
    pub(crate) fn eta_derivatives(&self, inv: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        (0..self.n())
            .map(|i| half * (self.t[i] - self.z[i] * inv[i]))
            .collect()
    }

    /// Per-subject second derivative `1/2 z_i exp(-eta_i)`.
    pub(crate) fn eta_curvatures(&self, inv: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        (0..self.n()).map(|i| half * self.z[i] * inv[i]).collect()
    }

    pub(crate) fn gradient_from(&self, d1: &[T]) -> Vec<T> {
        self.cols.iter().map(|c| dot(c, d1)).collect()
    }

    pub fn gradient(&self, beta: &[T]) -> Result<Vec<T>> {
        let inv = self.inverse_means(&self.linear_predictor(beta))?;
        Ok(self.gradient_from(&self.eta_derivatives(&inv)))
    }
}
