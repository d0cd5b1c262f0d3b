//! Fixtures and independent reference implementations shared by the
//! integration tests. Nothing here calls into the library's numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use covreg::data::{Moments, SubjectData};
use covreg::infer::{SplitPlan, SplitResult};
use covreg::{Dataset, Matrix};

/// Raw per-subject observations kept alongside the dataset so that oracles
/// can work from the original numbers.
pub struct RawData {
    pub y: Vec<Vec<Vec<f64>>>,
    pub x: Vec<Vec<f64>>,
}

impl RawData {
    pub fn dataset(&self) -> Dataset {
        Dataset::new(
            self.y
                .iter()
                .zip(&self.x)
                .map(|(y, x)| SubjectData::new(Matrix::from_rows(y), x.clone()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    /// `S_i = sum_t y_t y_t' / T_i` by an explicit triple loop.
    pub fn sample_covs(&self) -> Vec<Vec<Vec<f64>>> {
        self.y
            .iter()
            .map(|y| {
                let p = y[0].len();
                let mut s = vec![vec![0.0; p]; p];
                for row in y {
                    for a in 0..p {
                        for b in 0..p {
                            s[a][b] += row[a] * row[b];
                        }
                    }
                }
                let t = y.len() as f64;
                s.iter().map(|r| r.iter().map(|v| v / t).collect()).collect()
            })
            .collect()
    }

    /// `z_i = T_i gamma' S_i gamma`, computed as `sum_t (gamma' y_t)^2`.
    pub fn projected(&self, gamma: &[f64]) -> Vec<f64> {
        self.y
            .iter()
            .map(|y| {
                y.iter()
                    .map(|r| r.iter().zip(gamma).map(|(a, b)| a * b).sum::<f64>().powi(2))
                    .sum()
            })
            .collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.y.iter().map(|y| y.len() as f64).collect()
    }
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Subjects with intercept plus `q - 1` standard-normal covariates and
/// responses whose scale varies log-linearly with the covariates.
pub fn random_raw(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, t_range: (usize, usize)) -> RawData {
    let effect: Vec<f64> = (0..q).map(|j| if j == 0 { 0.0 } else { 0.5 * normal(rng) }).collect();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: Vec<f64> = (0..q).map(|j| if j == 0 { 1.0 } else { normal(rng) }).collect();
        let eta: f64 = xi.iter().zip(&effect).map(|(a, b)| a * b).sum();
        let t = rng.gen_range(t_range.0..=t_range.1);
        let scales: Vec<f64> = (0..p)
            .map(|k| if k == 0 { (eta / 2.0).exp() } else { 0.5 + k as f64 * 0.3 })
            .collect();
        let yi: Vec<Vec<f64>> = (0..t)
            .map(|_| scales.iter().map(|s| s * normal(rng)).collect())
            .collect();
        y.push(yi);
        x.push(xi);
    }
    RawData { y, x }
}

pub fn random_unit(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

/// `1/2 sum_i (T_i x_i'beta + z_i exp(-x_i'beta)) + lambda sum_{j>0} |beta_j|`.
pub fn literal_objective(x: &[Vec<f64>], w: &[f64], z: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let mut f = 0.0;
    for i in 0..x.len() {
        let eta: f64 = x[i].iter().zip(beta).map(|(a, b)| a * b).sum();
        f += 0.5 * (w[i] * eta + z[i] * (-eta).exp());
    }
    f + lambda * beta.iter().skip(1).map(|b| b.abs()).sum::<f64>()
}

/// Gradient of the smooth part: `1/2 sum_i (T_i - z_i exp(-eta_i)) x_i`.
pub fn literal_gradient(x: &[Vec<f64>], w: &[f64], z: &[f64], beta: &[f64]) -> Vec<f64> {
    let q = beta.len();
    let mut g = vec![0.0; q];
    for i in 0..x.len() {
        let eta: f64 = x[i].iter().zip(beta).map(|(a, b)| a * b).sum();
        let r = 0.5 * (w[i] - z[i] * (-eta).exp());
        for j in 0..q {
            g[j] += r * x[i][j];
        }
    }
    g
}

/// Exhaustive search over a sequence of grids, each centred on the best
/// point so far and given as `(half_width, step)`.
pub fn grid_minimize(f: impl Fn(&[f64]) -> f64, center: &[f64], stages: &[(f64, f64)]) -> Vec<f64> {
    let q = center.len();
    let mut best = center.to_vec();
    let mut best_val = f(&best);
    for &(hw, step) in stages {
        let k = (hw / step).round() as i64;
        let c = best.clone();
        let mut idx = vec![-k; q];
        let mut cand = vec![0.0; q];
        loop {
            for d in 0..q {
                cand[d] = c[d] + idx[d] as f64 * step;
            }
            let v = f(&cand);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&cand);
            }
            let mut d = 0;
            while d < q && idx[d] == k {
                idx[d] = -k;
                d += 1;
            }
            if d == q {
                break;
            }
            idx[d] += 1;
        }
    }
    best
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..p).map(|_| (0..p).map(|_| normal(rng)).collect()).collect();
    (0..p)
        .map(|r| {
            (0..p)
                .map(|c| (0..p).map(|k| a[r][k] * a[c][k]).sum::<f64>() + if r == c { 0.1 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn quad(m: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..v.len() {
        for b in 0..v.len() {
            s += v[a] * m[a][b] * v[b];
        }
    }
    s
}

/// Smallest value of `g'Ag` over `draws` random directions scaled to
/// `g'Hg = 1`.
pub fn random_search_min(rng: &mut ChaCha8Rng, a: &[Vec<f64>], h: &[Vec<f64>], draws: usize) -> f64 {
    let p = a.len();
    (0..draws)
        .map(|_| {
            let g: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
            quad(a, &g) / quad(h, &g)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Split results for `n` subjects over `b` rounds with `n1` in the
/// selection half and arbitrary refit values.
pub fn split_fixture(rng: &mut ChaCha8Rng, n: usize, n1: usize, b: usize, q: usize) -> (Vec<SplitResult<f64>>, Vec<f64>, SplitPlan) {
    let results: Vec<SplitResult<f64>> = (0..b)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            let mut membership = vec![true; n];
            for &i in &idx[..n1] {
                membership[i] = false;
            }
            SplitResult {
                support: vec![0],
                beta_tilde: (0..q).map(|_| normal(rng)).collect(),
                membership,
            }
        })
        .collect();
    let beta_hat = (0..q)
        .map(|j| results.iter().map(|r| r.beta_tilde[j]).sum::<f64>() / b as f64)
        .collect();
    (results, beta_hat, SplitPlan::with_n1(n, n1, b, 0))
}

/// Double-loop transcription of the infinitesimal-jackknife variance
/// (squared covariances) before truncation.
pub fn literal_ij(results: &[SplitResult<f64>], beta_hat: &[f64], n: usize, n1: usize) -> Vec<f64> {
    let b = results.len() as f64;
    let nf = n as f64;
    let n1f = n1 as f64;
    let mut out = Vec::new();
    for j in 0..beta_hat.len() {
        let mut first = 0.0;
        for i in 0..n {
            let mut nbar = 0.0;
            for r in results {
                nbar += if r.membership[i] { 1.0 } else { 0.0 };
            }
            nbar /= b;
            let mut cov = 0.0;
            for r in results {
                let nib = if r.membership[i] { 1.0 } else { 0.0 };
                cov += (nib - nbar) * (r.beta_tilde[j] - beta_hat[j]);
            }
            cov /= b;
            first += cov * cov;
        }
        let mut second = 0.0;
        for r in results {
            second += (r.beta_tilde[j] - beta_hat[j]).powi(2);
        }
        let v = (nf - 1.0) / nf * (nf / (nf - n1f)).powi(2) * first - nf / (b * b) * (n1f / (nf - n1f)) * second;
        out.push(v);
    }
    out
}

/// Balanced two-level factorial design with `k` sign columns (each column
/// flipped at random) plus an intercept, one subject per cell with `t`
/// observations, and responses exactly log-linear in `b`. Under this
/// likelihood every slope's lasso solution is the unpenalized slope
/// soft-thresholded at `atanh(2 lambda / sum T)`.
pub struct FactorialInstance {
    pub moments: Moments<f64>,
    pub b: Vec<f64>,
    pub total_weight: f64,
}

pub fn factorial_instance(rng: &mut ChaCha8Rng, k: usize, t: f64) -> FactorialInstance {
    let cells = 1usize << k;
    let flips: Vec<f64> = (0..k).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let b: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut rows = Vec::with_capacity(cells);
    let mut covs = Vec::with_capacity(cells);
    for c in 0..cells {
        let mut x = vec![1.0];
        for (j, f) in flips.iter().enumerate() {
            x.push(if c >> j & 1 == 1 { *f } else { -*f });
        }
        let eta: f64 = x.iter().zip(&b).map(|(a, c)| a * c).sum();
        covs.push(Matrix::from_rows(&[vec![eta.exp()]]));
        rows.push(x);
    }
    FactorialInstance {
        moments: Moments::from_parts(covs, vec![t; cells], Matrix::from_rows(&rows)),
        b,
        total_weight: t * cells as f64,
    }
}

pub fn soft_threshold(v: f64, kappa: f64) -> f64 {
    v.signum() * (v.abs() - kappa).max(0.0)
}
