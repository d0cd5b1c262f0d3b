use crate::data::{Moments, Projection};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::scalar::Real;

use super::{Coefficients, PenaltyKind, PenaltySpec};

/// `P(beta)`: `||beta||_1` over the penalized coordinates, or `||D beta||_1`.
pub fn penalty_value<T: Real>(penalty: &PenaltySpec<T>, beta: &[T]) -> T {
    match penalty.kind {
        PenaltyKind::Lasso => beta[penalty.first_penalized()..]
            .iter()
            .map(|b| b.abs())
            .sum(),
        PenaltyKind::Generalized => {
            let d = penalty.d.as_ref().expect("validated generalized penalty");
            d.mat_vec(beta).iter().map(|v| v.abs()).sum()
        }
    }
}

/// Penalized negative log-likelihood
/// `1/2 sum_i T_i {x_i'beta + gamma' S_i gamma exp(-x_i'beta)} + lambda P(beta)`.
pub fn objective<T: Real>(
    moments: &Moments<T>,
    beta: &Coefficients<T>,
    gamma: &Projection<T>,
    penalty: &PenaltySpec<T>,
) -> Result<T> {
    let x = moments.design();
    if beta.beta.len() != x.cols() || gamma.len() != moments.dim() {
        return Err(Error::Config(format!(
            "objective: beta has {} entries (q={}), gamma has {} (p={})",
            beta.beta.len(),
            x.cols(),
            gamma.len(),
            moments.dim()
        )));
    }
    let limit = T::lit(T::EXP_LIMIT);
    let mut acc = T::zero();
    for (i, (s, &w)) in moments.covs().iter().zip(moments.weights()).enumerate() {
        let eta = dot(x.row(i), &beta.beta);
        let arg = -eta;
        if !(arg <= limit) {
            return Err(Error::Overflow {
                subject: i,
                exponent: arg.to_f64_lossy(),
            });
        }
        let g = s.quad_form(gamma.as_slice());
        acc += w * (eta + g * arg.max(-limit).exp());
    }
    let value = T::lit(0.5) * acc + penalty.lambda * penalty_value(penalty, &beta.beta);
    if !value.is_finite() {
        return Err(Error::Overflow {
            subject: 0,
            exponent: f64::INFINITY,
        });
    }
    Ok(value)
}
