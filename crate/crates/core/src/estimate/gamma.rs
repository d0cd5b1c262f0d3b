use crate::data::{Moments, Projection};
use crate::error::{Error, Result};
use crate::linalg::{dot, orthogonal_complement, solve_lower_transpose, symmetric_eigen, whiten, Matrix};
use crate::scalar::Real;

use super::Coefficients;

/// Smallest eigenpair of the symmetric-definite pencil `(A, H)`:
/// minimizes `g' A g` subject to `g' H g = 1`.
///
/// `H` is Cholesky-factored, with a ridge of `1e-10 trace(H)/p` if the plain
/// factorization fails. The returned vector is renormalized against the
/// unridged `H`.
pub fn smallest_generalized_eigenpair<T: Real>(a: &Matrix<T>, h: &Matrix<T>) -> Result<(T, Vec<T>)> {
    let p = h.rows();
    let chol = match h.cholesky() {
        Some(l) => l,
        None => {
            let ridge = T::lit(1e-10) * h.trace() / T::from_usize_lossy(p);
            let mut hr = h.clone();
            for i in 0..p {
                hr[(i, i)] += ridge;
            }
            hr.cholesky().ok_or(Error::SingularPooled)?
        }
    };
    // The eigenvector is invariant to rescaling A; keep its entries O(1).
    let scale = a.trace().abs();
    let a_scaled = if scale > T::zero() && scale.is_finite() {
        a.scaled(scale.recip())
    } else {
        a.clone()
    };
    let c = whiten(&chol, &a_scaled);
    let (_, vecs) = symmetric_eigen(&c);
    let v = vecs.column(0);
    let mut g = solve_lower_transpose(&chol, &v);
    let norm = h.quad_form(&g);
    if !(norm > T::zero()) {
        return Err(Error::SingularPooled);
    }
    let inv = norm.sqrt().recip();
    g.iter_mut().for_each(|x| *x *= inv);
    Ok((a.quad_form(&g), g))
}

/// `A = 1/2 sum_i T_i exp(-x_i'beta) S_i`.
pub(crate) fn gamma_matrix<T: Real>(moments: &Moments<T>, beta: &[T]) -> Result<Matrix<T>> {
    let p = moments.dim();
    let x = moments.design();
    let limit = T::lit(T::EXP_LIMIT);
    let mut a = Matrix::zeros(p, p);
    for (i, (s, &w)) in moments.covs().iter().zip(moments.weights()).enumerate() {
        let arg = -dot(x.row(i), beta);
        if !(arg <= limit) {
            return Err(Error::Overflow {
                subject: i,
                exponent: arg.to_f64_lossy(),
            });
        }
        a.add_scaled(T::lit(0.5) * w * arg.max(-limit).exp(), s);
    }
    a.symmetrize();
    Ok(a)
}

/// Basis (columns) of `{g : g' H g_k = 0 for every prior g_k}`.
pub(crate) fn h_orthogonal_basis<T: Real>(h: &Matrix<T>, prior: &[Projection<T>]) -> Matrix<T> {
    let constraints: Vec<Vec<T>> = prior.iter().map(|g| h.mat_vec(g.as_slice())).collect();
    orthogonal_complement(&constraints, h.rows())
}

/// Minimizes the objective over `gamma` with `beta` fixed, restricted to the
/// H-orthogonal complement of `deflation` when it is non-empty.
pub fn gamma_step<T: Real>(
    moments: &Moments<T>,
    beta: &Coefficients<T>,
    deflation: &[Projection<T>],
) -> Result<Projection<T>> {
    let a = gamma_matrix(moments, &beta.beta)?;
    if deflation.is_empty() {
        let (_, g) = smallest_generalized_eigenpair(&a, moments.pooled())?;
        return Ok(Projection::new(g));
    }
    let basis = h_orthogonal_basis(moments.pooled(), deflation);
    if basis.cols() == 0 {
        return Err(Error::Config(
            "deflation exhausted the observation space".into(),
        ));
    }
    let a_red = a.congruence(&basis);
    let h_red = moments.pooled().congruence(&basis);
    let (_, u) = smallest_generalized_eigenpair(&a_red, &h_red)?;
    Ok(Projection::new(basis.mat_vec(&u)))
}
