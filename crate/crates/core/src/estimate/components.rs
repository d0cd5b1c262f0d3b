use serde::{Deserialize, Serialize};

use crate::data::{Moments, Projection};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, domain};
use crate::scalar::Real;

use super::fit::{fit_with_choice, FitOutcome};
use super::gamma::h_orthogonal_basis;
use super::{FitConfig, LambdaChoice, ModelFit, PenaltySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSet<T> {
    pub components: Vec<ModelFit<T>>,
    /// Average DfD after each retained component.
    pub dfd_values: Vec<T>,
}

impl<T: Real> ComponentSet<T> {
    pub fn projections(&self) -> Vec<Projection<T>> {
        self.components.iter().map(|c| c.gamma.clone()).collect()
    }
}

/// Average deviation from diagonality of `Gamma' S_i Gamma`, weighted by
/// `T_i / sum T_i` in the exponent. Always at least one.
pub fn dfd<T: Real>(moments: &Moments<T>, components: &[Projection<T>]) -> Result<T> {
    if components.is_empty() {
        return Err(Error::Config("dfd needs at least one component".into()));
    }
    let k = components.len();
    let basis = Matrix::from_columns(
        &components
            .iter()
            .map(|g| g.as_slice().to_vec())
            .collect::<Vec<_>>(),
    );
    let total = moments.total_weight();
    let mut log_dfd = T::zero();
    for (i, (s, &w)) in moments.covs().iter().zip(moments.weights()).enumerate() {
        let proj = s.congruence(&basis);
        let det = proj.determinant();
        if !(det > T::lit(1e-300)) {
            return Err(Error::SingularProjection {
                subject: i,
                det: det.to_f64_lossy(),
            });
        }
        let log_diag: T = (0..k).map(|a| proj[(a, a)].ln()).sum();
        log_dfd += (w / total) * (log_diag - det.ln());
    }
    Ok(log_dfd.exp())
}

/// Fits one more component restricted to the H-orthogonal complement of
/// `prior`: the data are re-expressed in a basis of that complement, the
/// alternating fit runs there, and the projection is mapped back.
pub fn fit_deflated<T: Real>(
    moments: &Moments<T>,
    prior: &[Projection<T>],
    penalty: &PenaltySpec<T>,
    choice: &LambdaChoice,
    config: &FitConfig,
) -> Result<FitOutcome<T>> {
    if prior.is_empty() {
        return fit_with_choice(moments, penalty, choice, config);
    }
    let basis = h_orthogonal_basis(moments.pooled(), prior);
    if basis.cols() == 0 {
        return Err(Error::Config("deflation exhausted the observation space".into()));
    }
    let reduced = moments.reduce(&basis);
    let mut outcome = fit_with_choice(&reduced, penalty, choice, config)?;
    let full = basis.mat_vec(outcome.fit.gamma.as_slice());
    outcome.fit.gamma = Projection::new(full);
    Ok(outcome)
}

/// Fits components one at a time with deflation, stopping before the first
/// component whose inclusion pushes the average DfD above `dfd_threshold`
/// (or after `max_components`).
pub fn select_components<T: Real>(
    moments: &Moments<T>,
    penalty: &PenaltySpec<T>,
    choice: &LambdaChoice,
    config: &FitConfig,
    dfd_threshold: T,
    max_components: usize,
) -> Result<ComponentSet<T>> {
    if !(dfd_threshold > T::one()) {
        return Err(Error::Config(format!(
            "dfd threshold must exceed 1, got {dfd_threshold}"
        )));
    }
    let limit = max_components.min(moments.dim());
    let mut components: Vec<ModelFit<T>> = Vec::new();
    let mut projections: Vec<Projection<T>> = Vec::new();
    let mut dfd_values = Vec::new();
    for k in 0..limit {
        let cfg = FitConfig {
            rng_seed: derive_seed(config.rng_seed, &[domain::FIT, k as u64]),
            ..config.clone()
        };
        let outcome = fit_deflated(moments, &projections, penalty, choice, &cfg)?;
        let mut candidate = projections.clone();
        candidate.push(outcome.fit.gamma.clone());
        let value = dfd(moments, &candidate)?;
        if value > dfd_threshold {
            log::debug!("component {} rejected: DfD {} > {}", k + 1, value, dfd_threshold);
            break;
        }
        projections = candidate;
        components.push(outcome.fit);
        dfd_values.push(value);
    }
    Ok(ComponentSet {
        components,
        dfd_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments_from(covs: Vec<Matrix<f64>>, weights: Vec<f64>) -> Moments<f64> {
        let n = covs.len();
        Moments::from_parts(covs, weights, Matrix::from_rows(&vec![vec![1.0]; n]))
    }

    #[test]
    fn diagonalizing_basis_gives_one() {
        let covs = vec![
            Matrix::from_diag(&[1.0, 2.0, 3.0]),
            Matrix::from_diag(&[4.0, 0.5, 1.0]),
        ];
        let m = moments_from(covs, vec![10.0, 20.0]);
        let comps = vec![
            Projection::new(vec![1.0, 0.0, 0.0]),
            Projection::new(vec![0.0, 1.0, 0.0]),
            Projection::new(vec![0.0, 0.0, 1.0]),
        ];
        assert!((dfd(&m, &comps).unwrap() - 1.0).abs() < 1e-14);
        assert!((dfd(&m, &comps[..1]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_literal_formula() {
        let covs = vec![
            Matrix::from_rows(&[vec![2.0, 0.5, 0.1], vec![0.5, 1.0, 0.3], vec![0.1, 0.3, 1.5]]),
            Matrix::from_rows(&[vec![1.0, -0.2, 0.0], vec![-0.2, 3.0, 0.4], vec![0.0, 0.4, 0.7]]),
            Matrix::from_rows(&[vec![0.9, 0.1, 0.2], vec![0.1, 0.8, -0.1], vec![0.2, -0.1, 2.0]]),
        ];
        let weights = vec![5.0, 7.0, 11.0];
        let g1 = vec![0.6, -0.3, 0.2];
        let g2 = vec![0.1, 0.5, 0.7];
        let m = moments_from(covs.clone(), weights.clone());
        let got = dfd(&m, &[Projection::new(g1.clone()), Projection::new(g2.clone())]).unwrap();
        let total: f64 = weights.iter().sum();
        let mut lit = 1.0;
        for (s, w) in covs.iter().zip(&weights) {
            let a = s.quad_form(&g1);
            let b = s.quad_form(&g2);
            let c = s.bilinear(&g1, &g2);
            lit *= (a * b / (a * b - c * c)).powf(w / total);
        }
        assert!((got - lit).abs() < 1e-10);
        assert!(got >= 1.0);
    }
}
