use crate::data::{Moments, Projection};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, symmetric_eigen, Matrix};
use crate::scalar::Real;

use super::glm::ProjectedGlm;
use super::{Coefficients, PenaltyKind, PenaltySpec};

const MAX_NEWTON_ITERS: usize = 500;
const MAX_CD_SWEEPS: usize = 100;
const MAX_PROX_GRAD_ITERS: usize = 200_000;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct BetaSolution<T> {
    pub beta: Vec<T>,
    pub iterations: usize,
    /// Lasso: largest KKT violation in gradient units. Generalized: size of
    /// the proximal-gradient fixed-point residual in coefficient units.
    pub kkt_residual: T,
}

/// Minimizes the penalized objective over `beta` with `gamma` held fixed.
pub fn beta_step<T: Real>(
    moments: &Moments<T>,
    gamma: &Projection<T>,
    penalty: &PenaltySpec<T>,
    init: &Coefficients<T>,
    tol: T,
) -> Result<Coefficients<T>> {
    let glm = ProjectedGlm::from_moments(moments, gamma.as_slice());
    solve_penalized(&glm, penalty, &init.beta, tol).map(|s| Coefficients::new(s.beta))
}

/// Solves the penalized GLM subproblem from `init`.
pub fn solve_penalized<T: Real>(
    glm: &ProjectedGlm<T>,
    penalty: &PenaltySpec<T>,
    init: &[T],
    tol: T,
) -> Result<BetaSolution<T>> {
    penalty.validate(glm.q())?;
    if init.len() != glm.q() {
        return Err(Error::Config(format!(
            "initial beta has {} entries, expected {}",
            init.len(),
            glm.q()
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::Config("beta solver tolerance must be positive".into()));
    }
    if glm.responses().iter().all(|&z| z <= T::zero()) {
        return Err(Error::Config(
            "all projected responses are zero; the likelihood is unbounded".into(),
        ));
    }
    let start = feasible_start(glm, init);
    match penalty.kind {
        PenaltyKind::Lasso => lasso_prox_newton(
            glm,
            penalty.lambda,
            penalty.first_penalized(),
            start,
            tol,
        ),
        PenaltyKind::Generalized if penalty.lambda == T::zero() => {
            lasso_prox_newton(glm, T::zero(), glm.q(), start, tol)
        }
        PenaltyKind::Generalized => generalized_prox_gradient(
            glm,
            penalty.lambda,
            penalty.d.as_ref().expect("validated"),
            start,
            tol,
        ),
    }
}

/// `init` when the loss is finite there, otherwise the intercept-only start.
fn feasible_start<T: Real>(glm: &ProjectedGlm<T>, init: &[T]) -> Vec<T> {
    if glm.loss(init).is_ok() {
        return init.to_vec();
    }
    let mut b = vec![T::zero(); glm.q()];
    if glm.q() > 0 && glm.column(0).iter().all(|&v| v == T::one()) {
        b[0] = glm.null_intercept();
    }
    b
}

/// Gradient entries are sums of terms of size `T_i`; below this level a
/// stalled line search reflects rounding, not a failure to converge.
fn precision_floor<T: Real>(glm: &ProjectedGlm<T>) -> T {
    T::epsilon() * T::lit(1024.0) * glm.total_weight()
}

#[inline]
fn soft_threshold<T: Real>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

fn l1_from<T: Real>(b: &[T], first: usize) -> T {
    b.iter().skip(first).map(|v| v.abs()).sum()
}

/// Largest violation of the lasso optimality conditions.
fn lasso_kkt<T: Real>(grad: &[T], beta: &[T], lambda: T, first: usize) -> T {
    let mut worst = T::zero();
    for (j, (&g, &b)) in grad.iter().zip(beta).enumerate() {
        let v = if j < first {
            g.abs()
        } else if b == T::zero() {
            (g.abs() - lambda).max(T::zero())
        } else {
            (g + lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Proximal Newton: each outer step minimizes the second-order model plus
/// the l1 term by cyclic coordinate descent (the penalized IRLS update),
/// followed by a backtracking line search on the true objective.
fn lasso_prox_newton<T: Real>(
    glm: &ProjectedGlm<T>,
    lambda: T,
    first: usize,
    mut beta: Vec<T>,
    tol: T,
) -> Result<BetaSolution<T>> {
    let (n, q) = (glm.n(), glm.q());
    let mut eta = glm.linear_predictor(&beta);
    let mut inv = glm.inverse_means(&eta)?;
    let mut fval = glm.loss_at(&eta)? + lambda * l1_from(&beta, first);
    let tiny = T::min_positive_value().sqrt();

    let mut b = vec![T::zero(); q];
    let mut r = vec![T::zero(); n];
    let mut hdiag = vec![T::zero(); q];

    for iter in 0..MAX_NEWTON_ITERS {
        let d1 = glm.eta_derivatives(&inv);
        let w = glm.eta_curvatures(&inv);
        let grad = glm.gradient_from(&d1);
        let kkt = lasso_kkt(&grad, &beta, lambda, first);
        if kkt <= tol {
            return Ok(BetaSolution {
                beta,
                iterations: iter,
                kkt_residual: kkt,
            });
        }
        for (j, h) in hdiag.iter_mut().enumerate() {
            let col = glm.column(j);
            *h = col.iter().zip(&w).map(|(&x, &wi)| wi * x * x).sum();
        }

        // Inner coordinate descent on the quadratic model, b = beta + d,
        // r = X d.
        b.copy_from_slice(&beta);
        r.iter_mut().for_each(|v| *v = T::zero());
        let inner_tol = (tol * T::lit(0.01)).max(kkt * T::lit(1e-3));
        let update = |j: usize, b: &mut [T], r: &mut [T]| -> T {
            let h = hdiag[j];
            if h <= tiny {
                return T::zero();
            }
            let col = glm.column(j);
            let mut gj = grad[j];
            for i in 0..n {
                gj += w[i] * col[i] * r[i];
            }
            let raw = b[j] - gj / h;
            let new = if j < first {
                raw
            } else {
                soft_threshold(raw, lambda / h)
            };
            let delta = new - b[j];
            if delta == T::zero() {
                return T::zero();
            }
            b[j] = new;
            for i in 0..n {
                r[i] += delta * col[i];
            }
            (delta * h).abs()
        };
        let mut sweeps = 0;
        loop {
            let mut worst = T::zero();
            for j in 0..q {
                worst = worst.max(update(j, &mut b, &mut r));
            }
            sweeps += 1;
            if worst <= inner_tol || sweeps >= MAX_CD_SWEEPS {
                break;
            }
            // Iterate on the current active set before the next full sweep.
            let active: Vec<usize> = (0..q).filter(|&j| b[j] != T::zero()).collect();
            loop {
                let mut worst = T::zero();
                for &j in &active {
                    worst = worst.max(update(j, &mut b, &mut r));
                }
                sweeps += 1;
                if worst <= inner_tol || sweeps >= MAX_CD_SWEEPS {
                    break;
                }
            }
        }

        let dir: Vec<T> = b.iter().zip(&beta).map(|(&a, &c)| a - c).collect();
        if dir.iter().all(|&d| d == T::zero()) {
            break;
        }
        let l1_change: T = b
            .iter()
            .zip(&beta)
            .skip(first)
            .map(|(&a, &c)| a.abs() - c.abs())
            .sum();
        let decrease = dot(&grad, &dir) + lambda * l1_change;
        if !decrease.is_finite() {
            break;
        }
        // A model decrease lost to rounding still gets the slack-guarded
        // line search rather than ending the solve.
        let decrease = decrease.min(T::zero());
        let slack = T::epsilon() * T::lit(64.0) * fval.abs().max(T::one());
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial_eta: Vec<T> = eta.iter().zip(&r).map(|(&e, &ri)| e + step * ri).collect();
            if let Ok(loss) = glm.loss_at(&trial_eta) {
                let trial: Vec<T> = beta
                    .iter()
                    .zip(&dir)
                    .map(|(&bj, &dj)| bj + step * dj)
                    .collect();
                let f_trial = loss + lambda * l1_from(&trial, first);
                if f_trial <= fval + T::lit(ARMIJO) * step * decrease + slack {
                    accepted = Some((trial, trial_eta, f_trial));
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        let Some((trial, trial_eta, f_trial)) = accepted else {
            break;
        };
        beta = trial;
        eta = trial_eta;
        inv = glm.inverse_means(&eta)?;
        fval = f_trial;
    }

    // Line search stalled at working precision or the iteration cap was hit.
    let grad = glm.gradient(&beta)?;
    let kkt = lasso_kkt(&grad, &beta, lambda, first);
    if kkt <= tol.max(precision_floor(glm)) {
        return Ok(BetaSolution {
            beta,
            iterations: MAX_NEWTON_ITERS,
            kkt_residual: kkt,
        });
    }
    Err(Error::NonConvergence {
        iterations: MAX_NEWTON_ITERS,
        kkt_residual: kkt.to_f64_lossy(),
        last_iterate: beta.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

/// Proximal operator of `c ||D .||_1` at `v`, solved through the box-
/// constrained dual `min_u 1/2 ||v - D'u||^2, |u_k| <= c` by accelerated
/// projected gradient. `u` is warm-started and updated in place.
fn prox_generalized<T: Real>(
    d: &Matrix<T>,
    dt: &Matrix<T>,
    lip: T,
    v: &[T],
    c: T,
    u: &mut [T],
) -> Vec<T> {
    let r = d.rows();
    for uk in u.iter_mut() {
        *uk = uk.max(-c).min(c);
    }
    let mut prev = u.to_vec();
    let mut y = u.to_vec();
    let mut t = T::one();
    let inv_l = lip.recip();
    let scale = T::one() + dot(v, v).sqrt();
    for _ in 0..20_000 {
        // gradient of the dual at y: -D (v - D'y)
        let dty = dt.mat_vec(&y);
        let resid: Vec<T> = v.iter().zip(&dty).map(|(&a, &b)| a - b).collect();
        let g = d.mat_vec(&resid);
        let mut change = T::zero();
        for k in 0..r {
            let nk = (y[k] + inv_l * g[k]).max(-c).min(c);
            change = change.max((nk - u[k]).abs());
            prev[k] = u[k];
            u[k] = nk;
        }
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        let mom = (t - T::one()) / t_next;
        for k in 0..r {
            y[k] = u[k] + mom * (u[k] - prev[k]);
        }
        t = t_next;
        if change <= T::epsilon() * T::lit(16.0) * scale {
            break;
        }
    }
    let dtu = dt.mat_vec(u);
    v.iter().zip(&dtu).map(|(&a, &b)| a - b).collect()
}

fn generalized_prox_gradient<T: Real>(
    glm: &ProjectedGlm<T>,
    lambda: T,
    d: &Matrix<T>,
    mut beta: Vec<T>,
    tol: T,
) -> Result<BetaSolution<T>> {
    let dt = d.transpose();
    let (vals, _) = symmetric_eigen(&d.matmul(&dt));
    let lip = vals.last().copied().unwrap_or(T::one()).max(T::lit(1e-12));
    let pen = |b: &[T]| lambda * d.mat_vec(b).iter().map(|v| v.abs()).sum::<T>();
    let mut u = vec![T::zero(); d.rows()];

    let mut big_f = glm.loss(&beta)? + pen(&beta);

    // Initial step from the curvature at the start.
    let inv = glm.inverse_means(&glm.linear_predictor(&beta))?;
    let w = glm.eta_curvatures(&inv);
    let curv: T = (0..glm.n())
        .map(|i| {
            let row = glm.design().row(i);
            w[i] * dot(row, row)
        })
        .sum();
    let mut step = curv.max(T::lit(1e-12)).recip();

    let mut y = beta.clone();
    let mut t = T::one();
    let mut residual = T::infinity();
    for iter in 0..MAX_PROX_GRAD_ITERS {
        let f_y = glm.loss(&y)?;
        let g = glm.gradient(&y)?;
        let mut candidate;
        loop {
            let v: Vec<T> = y.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
            candidate = prox_generalized(d, &dt, lip, &v, step * lambda, &mut u);
            let diff: Vec<T> = candidate.iter().zip(&y).map(|(&a, &b)| a - b).collect();
            let bound = f_y + dot(&g, &diff) + dot(&diff, &diff) / (T::lit(2.0) * step);
            match glm.loss(&candidate) {
                Ok(fc) if fc <= bound + T::epsilon() * T::lit(64.0) * f_y.abs().max(T::one()) => {
                    break
                }
                _ => step *= T::lit(0.5),
            }
            if step < T::min_positive_value() {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    kkt_residual: residual.to_f64_lossy(),
                    last_iterate: beta.iter().map(|v| v.to_f64_lossy()).collect(),
                });
            }
        }
        let f_cand = glm.loss(&candidate)?;
        let big_cand = f_cand + pen(&candidate);
        if big_cand > big_f && t > T::one() {
            // Momentum overshot: restart from the last accepted point.
            y = beta.clone();
            t = T::one();
            continue;
        }
        residual = candidate
            .iter()
            .zip(&y)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        let mom = (t - T::one()) / t_next;
        let prev = std::mem::replace(&mut beta, candidate);
        big_f = big_f.min(big_cand);
        y = beta
            .iter()
            .zip(&prev)
            .map(|(&a, &b)| a + mom * (a - b))
            .collect();
        t = t_next;
        if residual <= tol {
            return Ok(BetaSolution {
                beta,
                iterations: iter,
                kkt_residual: residual,
            });
        }
        step *= T::lit(1.1);
    }
    Err(Error::NonConvergence {
        iterations: MAX_PROX_GRAD_ITERS,
        kkt_residual: residual.to_f64_lossy(),
        last_iterate: beta.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

/// Columns (indices into `cols`) that are linearly dependent on earlier
/// columns, by Gram-Schmidt with a relative threshold.
fn collinear_columns<T: Real>(glm: &ProjectedGlm<T>, cols: &[usize]) -> Vec<usize> {
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut bad = Vec::new();
    for &j in cols {
        let col = glm.column(j);
        let nrm0 = dot(col, col).sqrt();
        let mut v = col.to_vec();
        for b in &basis {
            let c = dot(&v, b);
            for (vi, &bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm <= T::lit(1e-10) * nrm0.max(T::one()) {
            bad.push(j);
        } else {
            basis.push(v.into_iter().map(|x| x / nrm).collect());
        }
    }
    bad
}

/// Unpenalized maximum-likelihood fit on the listed columns by damped
/// Newton. Returns coefficients in the order of `cols`.
pub fn refit_unpenalized<T: Real>(
    glm: &ProjectedGlm<T>,
    cols: &[usize],
    init: Option<&[T]>,
    tol: T,
) -> Result<Vec<T>> {
    let bad = collinear_columns(glm, cols);
    if !bad.is_empty() || cols.len() > glm.n() {
        return Err(Error::RankDeficient { columns: bad });
    }
    let sub = glm.select_columns(cols);
    let m = cols.len();
    let mut beta = match init {
        Some(b) if b.len() == m && sub.loss(b).is_ok() => b.to_vec(),
        _ => {
            let mut b = vec![T::zero(); m];
            if let Some(pos) = cols.iter().position(|&c| c == 0) {
                if glm.column(0).iter().all(|&v| v == T::one()) {
                    b[pos] = sub.null_intercept();
                }
            }
            b
        }
    };
    let mut eta = sub.linear_predictor(&beta);
    let mut fval = sub.loss_at(&eta)?;
    let mut last_grad = T::infinity();
    for _ in 0..MAX_NEWTON_ITERS {
        let inv = sub.inverse_means(&eta)?;
        let d1 = sub.eta_derivatives(&inv);
        let w = sub.eta_curvatures(&inv);
        let grad = sub.gradient_from(&d1);
        last_grad = grad.iter().fold(T::zero(), |a, g| a.max(g.abs()));
        if last_grad <= tol {
            return Ok(beta);
        }
        let mut hess = Matrix::zeros(m, m);
        for (i, &wi) in w.iter().enumerate().take(sub.n()) {
            let row = sub.design().row(i);
            for a in 0..m {
                let wa = wi * row[a];
                for b in a..m {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let chol = hess
            .cholesky()
            .ok_or_else(|| Error::RankDeficient { columns: cols.to_vec() })?;
        let dir: Vec<T> = cholesky_solve(&chol, &grad).into_iter().map(|v| -v).collect();
        let decrease = dot(&grad, &dir);
        if !(decrease < T::zero()) {
            break;
        }
        let xdir = sub.linear_predictor(&dir);
        let slack = T::epsilon() * T::lit(64.0) * fval.abs().max(T::one());
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let trial_eta: Vec<T> = eta.iter().zip(&xdir).map(|(&e, &x)| e + step * x).collect();
            if let Ok(ft) = sub.loss_at(&trial_eta) {
                if ft <= fval + T::lit(ARMIJO) * step * decrease + slack {
                    for (bj, &dj) in beta.iter_mut().zip(&dir) {
                        *bj += step * dj;
                    }
                    eta = trial_eta;
                    fval = ft;
                    accepted = true;
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    let grad = sub.gradient(&beta)?;
    let g = grad.iter().fold(T::zero(), |a, g| a.max(g.abs()));
    if g <= tol.max(precision_floor(glm)) {
        return Ok(beta);
    }
    Err(Error::NonConvergence {
        iterations: MAX_NEWTON_ITERS,
        kkt_residual: g.min(last_grad).to_f64_lossy(),
        last_iterate: beta.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}
