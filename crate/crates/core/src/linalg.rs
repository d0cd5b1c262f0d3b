//! Small dense linear algebra on row-major matrices.
//!
//! Every matrix in this crate is at most a few dozen rows wide (p x p
//! covariances, refit normal equations), so plain row-major storage with
//! cyclic Jacobi and Cholesky is all that is needed.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Self {
        let c = columns.len();
        let r = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), r, "ragged columns");
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mat_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `v' M v`.
    pub fn quad_form(&self, v: &[T]) -> T {
        self.bilinear(v, v)
    }

    /// `u' M v`.
    pub fn bilinear(&self, u: &[T], v: &[T]) -> T {
        assert_eq!(self.rows, u.len());
        assert_eq!(self.cols, v.len());
        let mut acc = T::zero();
        for (i, &ui) in u.iter().enumerate() {
            acc += ui * dot(self.row(i), v);
        }
        acc
    }

    /// `B' M B` for a p x k basis `B`.
    pub fn congruence(&self, basis: &Self) -> Self {
        basis.transpose().matmul(&self.matmul(basis))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: T, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = half * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Lower Cholesky factor, or `None` when a pivot is not strictly positive.
    pub fn cholesky(&self) -> Option<Self> {
        assert!(self.is_square());
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(l)
    }

    /// Determinant by LU with partial pivoting.
    pub fn determinant(&self) -> T {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut det = T::one();
        for k in 0..n {
            let mut piv = k;
            for i in (k + 1)..n {
                if a[(i, k)].abs() > a[(piv, k)].abs() {
                    piv = i;
                }
            }
            if a[(piv, k)] == T::zero() {
                return T::zero();
            }
            if piv != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(piv, j)];
                    a[(piv, j)] = tmp;
                }
                det = -det;
            }
            let pivot = a[(k, k)];
            det *= pivot;
            for i in (k + 1)..n {
                let f = a[(i, k)] / pivot;
                if f == T::zero() {
                    continue;
                }
                for j in k..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        det
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `L' x = b` for lower-triangular `L`.
pub fn solve_lower_transpose<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `(L L') x = b` given the Cholesky factor.
pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// `L^{-1} M L^{-T}` for symmetric `M`.
pub fn whiten<T: Real>(l: &Matrix<T>, m: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    // Columns of L^{-1} M.
    let mut left = Matrix::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(l, &m.column(j));
        for i in 0..n {
            left[(i, j)] = col[i];
        }
    }
    // (L^{-1} (L^{-1} M)')' = L^{-1} M L^{-T}.
    let lt = left.transpose();
    let mut out = Matrix::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(l, &lt.column(j));
        for i in 0..n {
            out[(j, i)] = col[i];
        }
    }
    out.symmetrize();
    out
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns.
pub fn symmetric_eigen<T: Real>(m: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.clone();
    a.symmetrize();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();
    let scale = a.max_abs();
    if scale == T::zero() {
        return (vec![T::zero(); n], v);
    }
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= eps * eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Skip rotations that cannot change the diagonal at working precision.
                if apq.abs() < eps * eps * (app.abs() + aqq.abs()) {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .partial_cmp(&a[(j, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    (values, vectors)
}

/// Orthonormal basis (columns) of the orthogonal complement of the span of
/// `vectors`, computed from the eigenvectors of `I - P`.
pub fn orthogonal_complement<T: Real>(vectors: &[Vec<T>], dim: usize) -> Matrix<T> {
    let k = vectors.len();
    if k == 0 {
        return Matrix::identity(dim);
    }
    // Orthonormalize the input first (modified Gram-Schmidt).
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(k);
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let c = dot(&w, b);
            for (wi, &bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
        let nrm = norm2(&w);
        if nrm > T::lit(1e-12) {
            basis.push(w.into_iter().map(|x| x / nrm).collect());
        }
    }
    let mut proj = Matrix::identity(dim);
    for b in &basis {
        for i in 0..dim {
            for j in 0..dim {
                proj[(i, j)] -= b[i] * b[j];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen(&proj);
    let keep: Vec<usize> = (0..dim).filter(|&i| vals[i] > T::lit(0.5)).collect();
    let mut out = Matrix::zeros(dim, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for r in 0..dim {
            out[(r, c)] = vecs[(r, i)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> Matrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut m = b.matmul(&b.transpose());
        for i in 0..n {
            m[(i, i)] += 0.5;
        }
        m
    }

    #[test]
    fn jacobi_reconstructs() {
        let m = spd(6, 3);
        let (vals, vecs) = symmetric_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let rebuilt = vecs.matmul(&Matrix::from_diag(&vals)).matmul(&vecs.transpose());
        assert!(rebuilt.max_abs_diff(&m) < 1e-12);
        let gram = vecs.transpose().matmul(&vecs);
        assert!(gram.max_abs_diff(&Matrix::identity(6)) < 1e-12);
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let m = spd(5, 11);
        let l = m.cholesky().unwrap();
        let b = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let x = cholesky_solve(&l, &b);
        let back = m.mat_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let w = whiten(&l, &m);
        assert!(w.max_abs_diff(&Matrix::identity(5)) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(m.cholesky().is_none());
    }

    #[test]
    fn determinant_matches_cofactor() {
        let m = Matrix::<f64>::from_rows(&[
            vec![2.0, -1.0, 0.5],
            vec![0.3, 4.0, 1.0],
            vec![1.0, 0.0, -3.0],
        ]);
        let cof = 2.0 * (4.0 * -3.0 - 1.0 * 0.0) + (0.3 * -3.0 - 1.0 * 1.0)
            + 0.5 * (0.3 * 0.0 - 4.0 * 1.0);
        assert!((m.determinant() - cof).abs() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal() {
        let v: Vec<Vec<f64>> = vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]];
        let q = orthogonal_complement(&v, 4);
        assert_eq!(q.cols(), 2);
        for c in 0..2 {
            let col = q.column(c);
            for w in &v {
                assert!(dot(&col, w).abs() < 1e-12);
            }
        }
        assert!(q.transpose().matmul(&q).max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }
}
