use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::scalar::Real;

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function, `p` in (0,1). The series inverse is
/// polished by one Newton step against the distribution function.
pub fn normal_quantile(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 && x.is_finite() {
        x - (normal_cdf(x) - p) / density
    } else {
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedInference<T> {
    pub beta_hat: Vec<T>,
    pub v_hat: Vec<T>,
    pub ci_lower: Vec<T>,
    pub ci_upper: Vec<T>,
    pub p_values: Vec<T>,
    pub alpha: f64,
}

/// Wald intervals `beta_hat +/- z_{1-alpha/2} sqrt(v_hat)` and two-sided
/// p-values. A zero variance gives a point interval and p = 0 (or 1 when
/// the estimate is also zero).
pub fn intervals_and_pvalues<T: Real>(beta_hat: &[T], v_hat: &[T], alpha: f64) -> SmoothedInference<T> {
    let z = normal_quantile(1.0 - alpha / 2.0);
    let mut ci_lower = Vec::with_capacity(beta_hat.len());
    let mut ci_upper = Vec::with_capacity(beta_hat.len());
    let mut p_values = Vec::with_capacity(beta_hat.len());
    for (&b, &v) in beta_hat.iter().zip(v_hat) {
        let (b64, v64) = (b.to_f64_lossy(), v.to_f64_lossy().max(0.0));
        let half = z * v64.sqrt();
        ci_lower.push(T::lit(b64 - half));
        ci_upper.push(T::lit(b64 + half));
        let p = if v64 > 0.0 {
            erfc(b64.abs() / v64.sqrt() / std::f64::consts::SQRT_2)
        } else if b64 != 0.0 {
            0.0
        } else {
            1.0
        };
        p_values.push(T::lit(p.clamp(0.0, 1.0)));
    }
    SmoothedInference {
        beta_hat: beta_hat.to_vec(),
        v_hat: v_hat.to_vec(),
        ci_lower,
        ci_upper,
        p_values,
        alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_quantile_and_interval() {
        let r = intervals_and_pvalues(&[0.0f64], &[1.0], 0.05);
        assert!((r.ci_lower[0] + 1.959964).abs() < 1e-6);
        assert!((r.ci_upper[0] - 1.959964).abs() < 1e-6);
        assert!((r.p_values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-6, 0.025, 0.3, 0.5, 0.8, 0.975] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-12);
        }
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn p_value_at_the_quantile() {
        let r = intervals_and_pvalues(&[1.959964f64], &[1.0], 0.05);
        assert!((r.p_values[0] - 0.05).abs() < 1e-6);
    }

    #[test]
    fn degenerate_variance() {
        let r = intervals_and_pvalues(&[3.0f64, 0.0], &[0.0, 0.0], 0.05);
        assert_eq!(r.p_values, vec![0.0, 1.0]);
        assert_eq!((r.ci_lower[0], r.ci_upper[0]), (3.0, 3.0));
    }
}
