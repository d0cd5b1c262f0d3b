//! Subject data, validation, ingestion and the covariance primitives that the
//! estimation and inference layers consume.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// One unit: a `T_i x p` block of mean-zero observations and its covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectData<T> {
    y: Matrix<T>,
    x: Vec<T>,
}

impl<T: Real> SubjectData<T> {
    /// Validates and wraps one subject. `x[0]` must be exactly one.
    pub fn new(y: Matrix<T>, x: Vec<T>) -> Result<Self> {
        Self::with_index(0, y, x)
    }

    pub(crate) fn with_index(index: usize, y: Matrix<T>, x: Vec<T>) -> Result<Self> {
        if y.rows() == 0 {
            return Err(Error::EmptySubject { subject: index });
        }
        if x.is_empty() {
            return Err(Error::DimensionMismatch {
                subject: index,
                expected: "q >= 1 covariates".into(),
                found: "0".into(),
            });
        }
        if !y.all_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { subject: index });
        }
        if x[0] != T::one() {
            return Err(Error::MissingIntercept {
                subject: index,
                found: x[0].to_f64_lossy(),
            });
        }
        Ok(Self { y, x })
    }

    pub fn y(&self) -> &Matrix<T> {
        &self.y
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn t_count(&self) -> usize {
        self.y.rows()
    }

    pub fn p(&self) -> usize {
        self.y.cols()
    }

    pub fn q(&self) -> usize {
        self.x.len()
    }
}

/// An ordered, validated collection of subjects sharing `p` and `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    subjects: Vec<SubjectData<T>>,
    p: usize,
    q: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(subjects: Vec<SubjectData<T>>) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::Config("dataset needs at least two subjects".into()))?;
        let (p, q) = (first.p(), first.q());
        for (i, s) in subjects.iter().enumerate() {
            if s.p() != p || s.q() != q {
                return Err(Error::DimensionMismatch {
                    subject: i,
                    expected: format!("p={p}, q={q}"),
                    found: format!("p={}, q={}", s.p(), s.q()),
                });
            }
        }
        if subjects.len() < 2 {
            return Err(Error::Config("dataset needs at least two subjects".into()));
        }
        Ok(Self { subjects, p, q })
    }

    pub fn subjects(&self) -> &[SubjectData<T>] {
        &self.subjects
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `M_n`, the total number of observations.
    pub fn total_observations(&self) -> usize {
        self.subjects.iter().map(SubjectData::t_count).sum()
    }

    /// Copy with every non-intercept covariate centered and scaled to unit
    /// (population) standard deviation. Constant columns are only centered.
    pub fn standardize_covariates(&self) -> Self {
        let n = T::from_usize_lossy(self.n());
        let mut subjects = self.subjects.clone();
        for j in 1..self.q {
            let mean = self.subjects.iter().map(|s| s.x[j]).sum::<T>() / n;
            let var = self
                .subjects
                .iter()
                .map(|s| (s.x[j] - mean) * (s.x[j] - mean))
                .sum::<T>()
                / n;
            let sd = if var > T::zero() { var.sqrt() } else { T::one() };
            for s in &mut subjects {
                s.x[j] = (s.x[j] - mean) / sd;
            }
        }
        Self {
            subjects,
            p: self.p,
            q: self.q,
        }
    }

    /// Per-subject sample covariances, the pooled matrix and the design, in
    /// the form the estimators work with.
    pub fn moments(&self) -> Moments<T> {
        Moments::from_dataset(self)
    }
}

/// `S_i = sum_t y_it y_it' / T_i` together with its weight `T_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCov<T> {
    pub s: Matrix<T>,
    pub weight: usize,
}

/// `H = sum_i T_i S_i / sum_i T_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledMatrix<T> {
    pub h: Matrix<T>,
}

/// A direction `gamma` in observation space, sign-canonicalized so that the
/// entry of largest magnitude is positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Projection<T> {
    gamma: Vec<T>,
}

impl<T: Real> Projection<T> {
    pub fn new(gamma: Vec<T>) -> Self {
        let mut gamma = gamma;
        let mut pivot = T::zero();
        for &g in &gamma {
            if g.abs() > pivot.abs() {
                pivot = g;
            }
        }
        if pivot < T::zero() {
            for g in &mut gamma {
                *g = -*g;
            }
        }
        Self { gamma }
    }

    /// Rescales so that `gamma' H gamma = 1`. Returns `None` for a null direction.
    pub fn normalized(&self, h: &Matrix<T>) -> Option<Self> {
        let norm = h.quad_form(&self.gamma);
        if !(norm > T::zero()) {
            return None;
        }
        let c = norm.sqrt().recip();
        Some(Self::new(self.gamma.iter().map(|&g| g * c).collect()))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.gamma
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Euclidean unit vector along this direction.
    pub fn unit(&self) -> Vec<T> {
        let nrm = dot(&self.gamma, &self.gamma).sqrt();
        if nrm == T::zero() {
            return self.gamma.clone();
        }
        self.gamma.iter().map(|&g| g / nrm).collect()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.gamma
    }
}

pub fn sample_covariance<T: Real>(subject: &SubjectData<T>) -> SampleCov<T> {
    let p = subject.p();
    let t = subject.t_count();
    let mut s = Matrix::zeros(p, p);
    for r in 0..t {
        let row = subject.y.row(r);
        for i in 0..p {
            let yi = row[i];
            if yi == T::zero() {
                continue;
            }
            for j in i..p {
                s[(i, j)] += yi * row[j];
            }
        }
    }
    let inv_t = T::from_usize_lossy(t).recip();
    for i in 0..p {
        for j in i..p {
            let v = s[(i, j)] * inv_t;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    SampleCov { s, weight: t }
}

pub fn pooled_matrix<T: Real>(dataset: &Dataset<T>) -> PooledMatrix<T> {
    let covs: Vec<SampleCov<T>> = dataset.subjects.iter().map(sample_covariance).collect();
    pool(&covs, dataset.p)
}

fn pool<T: Real>(covs: &[SampleCov<T>], p: usize) -> PooledMatrix<T> {
    let mut h = Matrix::zeros(p, p);
    let mut total = T::zero();
    for c in covs {
        let w = T::from_usize_lossy(c.weight);
        h.add_scaled(w, &c.s);
        total += w;
    }
    let mut h = h.scaled(total.recip());
    h.symmetrize();
    PooledMatrix { h }
}

/// `z_i = sum_t (gamma' y_it)^2`.
pub fn project_response<T: Real>(subject: &SubjectData<T>, gamma: &Projection<T>) -> T {
    assert_eq!(gamma.len(), subject.p(), "projection length must equal p");
    (0..subject.t_count())
        .map(|r| {
            let v = dot(subject.y.row(r), gamma.as_slice());
            v * v
        })
        .sum()
}

/// Sufficient statistics of a dataset: every estimator in the crate only
/// sees the data through `S_i`, `T_i`, `x_i` and `H`.
///
/// A `Moments` may also live in a reduced coordinate system (after
/// deflation), in which case `dim()` is smaller than the original `p`.
#[derive(Clone, Debug)]
pub struct Moments<T> {
    covs: Vec<Matrix<T>>,
    weights: Vec<T>,
    x: Matrix<T>,
    h: Matrix<T>,
}

impl<T: Real> Moments<T> {
    pub fn from_dataset(dataset: &Dataset<T>) -> Self {
        let covs: Vec<SampleCov<T>> = dataset.subjects.iter().map(sample_covariance).collect();
        let h = pool(&covs, dataset.p).h;
        let rows: Vec<Vec<T>> = dataset.subjects.iter().map(|s| s.x.clone()).collect();
        Self {
            weights: covs.iter().map(|c| T::from_usize_lossy(c.weight)).collect(),
            covs: covs.into_iter().map(|c| c.s).collect(),
            x: Matrix::from_rows(&rows),
            h,
        }
    }

    /// Builds moments directly from covariance matrices, weights and covariates.
    pub fn from_parts(covs: Vec<Matrix<T>>, weights: Vec<T>, x: Matrix<T>) -> Self {
        assert_eq!(covs.len(), weights.len());
        assert_eq!(covs.len(), x.rows());
        let p = covs.first().map_or(0, Matrix::rows);
        let mut h = Matrix::zeros(p, p);
        let mut total = T::zero();
        for (c, &w) in covs.iter().zip(&weights) {
            h.add_scaled(w, c);
            total += w;
        }
        let mut h = h.scaled(total.recip());
        h.symmetrize();
        Self { covs, weights, x, h }
    }

    pub fn n(&self) -> usize {
        self.covs.len()
    }

    /// Dimension of the (possibly reduced) observation space.
    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn q(&self) -> usize {
        self.x.cols()
    }

    pub fn covs(&self) -> &[Matrix<T>] {
        &self.covs
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn design(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn pooled(&self) -> &Matrix<T> {
        &self.h
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// `gamma' S_i gamma` for every subject.
    pub fn projected_variances(&self, gamma: &[T]) -> Vec<T> {
        self.covs.iter().map(|s| s.quad_form(gamma)).collect()
    }

    /// `z_i = T_i gamma' S_i gamma` for every subject.
    pub fn responses(&self, gamma: &[T]) -> Vec<T> {
        self.covs
            .iter()
            .zip(&self.weights)
            .map(|(s, &w)| w * s.quad_form(gamma))
            .collect()
    }

    /// Restriction to a subset of subjects (pooled matrix recomputed).
    pub fn subset(&self, idx: &[usize]) -> Self {
        let covs = idx.iter().map(|&i| self.covs[i].clone()).collect();
        let weights = idx.iter().map(|&i| self.weights[i]).collect();
        let rows: Vec<Vec<T>> = idx.iter().map(|&i| self.x.row(i).to_vec()).collect();
        Self::from_parts(covs, weights, Matrix::from_rows(&rows))
    }

    /// Moments of the data expressed in the coordinates of `basis` (columns),
    /// i.e. `S_i -> B' S_i B` and `H -> B' H B`.
    pub fn reduce(&self, basis: &Matrix<T>) -> Self {
        let covs = self.covs.iter().map(|s| s.congruence(basis)).collect();
        let mut h = self.h.congruence(basis);
        h.symmetrize();
        Self {
            covs,
            weights: self.weights.clone(),
            x: self.x.clone(),
            h,
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Manifest {
    p: usize,
    q: usize,
    subjects: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestEntry {
    y: PathBuf,
    x: PathBuf,
}

fn read_csv_rows(path: &Path, subject: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    subject,
                    message: format!("row {line}: {field:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a dataset from a JSON manifest listing per-subject CSV files.
/// Relative paths are resolved against the manifest's directory.
pub fn load_dataset<T: Real>(manifest_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|source| Error::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for (i, entry) in manifest.subjects.iter().enumerate() {
        let y_rows = read_csv_rows(&resolve(&entry.y), i)?;
        let x_rows = read_csv_rows(&resolve(&entry.x), i)?;
        if let Some(bad) = y_rows.iter().find(|r| r.len() != manifest.p) {
            return Err(Error::DimensionMismatch {
                subject: i,
                expected: format!("p={}", manifest.p),
                found: format!("p={}", bad.len()),
            });
        }
        if x_rows.len() != 1 || x_rows[0].len() != manifest.q {
            return Err(Error::DimensionMismatch {
                subject: i,
                expected: format!("1 x q={} covariate row", manifest.q),
                found: format!(
                    "{} x {}",
                    x_rows.len(),
                    x_rows.first().map_or(0, Vec::len)
                ),
            });
        }
        let to_t = |v: f64| T::from_f64(v).unwrap_or_else(T::nan);
        let y: Vec<Vec<T>> = y_rows
            .iter()
            .map(|r| r.iter().copied().map(to_t).collect())
            .collect();
        let x: Vec<T> = x_rows[0].iter().copied().map(to_t).collect();
        let y = if y.is_empty() {
            Matrix::zeros(0, manifest.p)
        } else {
            Matrix::from_rows(&y)
        };
        subjects.push(SubjectData::with_index(i, y, x)?);
    }
    if subjects.len() < 2 {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            message: format!("need at least 2 subjects, found {}", subjects.len()),
        });
    }
    Dataset::new(subjects)
}

/// Writes a dataset as a manifest plus per-subject CSV files under `dir`.
/// Returns the manifest path.
pub fn save_dataset<T: Real>(dataset: &Dataset<T>, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(dataset.n());
    for (i, s) in dataset.subjects.iter().enumerate() {
        let y_name = PathBuf::from(format!("subject_{i:04}_y.csv"));
        let x_name = PathBuf::from(format!("subject_{i:04}_x.csv"));
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join(&y_name))?;
        for r in 0..s.t_count() {
            w.write_record(s.y.row(r).iter().map(|v| format!("{:?}", v.to_f64_lossy())))?;
        }
        w.flush().map_err(io_err(&dir.join(&y_name)))?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join(&x_name))?;
        w.write_record(s.x.iter().map(|v| format!("{:?}", v.to_f64_lossy())))?;
        w.flush().map_err(io_err(&dir.join(&x_name)))?;
        entries.push(ManifestEntry {
            y: y_name,
            x: x_name,
        });
    }
    let manifest = Manifest {
        p: dataset.p,
        q: dataset.q,
        subjects: entries,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(path)
}
