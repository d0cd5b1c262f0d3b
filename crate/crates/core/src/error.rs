use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in ingestion, estimation, inference or simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("cannot parse {path}: {message}, subject {subject}")]
    Parse {
        path: PathBuf,
        subject: usize,
        message: String,
    },

    #[error("non-finite value, subject {subject}")]
    NonFinite { subject: usize },

    #[error("dimension mismatch, subject {subject}: expected {expected}, found {found}")]
    DimensionMismatch {
        subject: usize,
        expected: String,
        found: String,
    },

    #[error("missing intercept column, subject {subject}: first covariate is {found}, expected 1")]
    MissingIntercept { subject: usize, found: f64 },

    #[error("subject {subject} has no observations")]
    EmptySubject { subject: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("exp overflow at subject {subject}: exponent {exponent} exceeds the allowed range")]
    Overflow { subject: usize, exponent: f64 },

    #[error(
        "beta solver did not converge after {iterations} iterations (KKT residual {kkt_residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        kkt_residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("pooled matrix is singular beyond ridge tolerance; check that p < min T_i")]
    SingularPooled,

    #[error("rank-deficient refit design; collinear columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("singular projected covariance at subject {subject} (det {det:e})")]
    SingularProjection { subject: usize, det: f64 },

    #[error("all {} restarts failed: {}", .diagnostics.len(), .diagnostics.join("; "))]
    AllRestartsFailed { diagnostics: Vec<String> },

    #[error("split round {round} failed twice: {message}")]
    SplitFailed { round: usize, message: String },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the failure stems from malformed input or configuration rather
    /// than from the numerical procedures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Manifest { .. }
                | Error::Parse { .. }
                | Error::NonFinite { .. }
                | Error::DimensionMismatch { .. }
                | Error::MissingIntercept { .. }
                | Error::EmptySubject { .. }
                | Error::Config(_)
                | Error::Serde(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
