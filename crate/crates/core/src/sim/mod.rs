//! Monte-Carlo harness: synthetic grouped data with a common eigenbasis,
//! replicate orchestration (fit, match, infer, score) and summary reports.

mod generate;
mod report;
mod run;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{FitConfig, LambdaChoice};
use crate::linalg::Matrix;

pub use generate::{default_eigvecs, generate_dataset, generate_subject, Truth, TruthComponent};
pub use report::{
    CoefficientSummary, GammaSummary, SimDiagnostics, SimReport, SweepCell, SweepReport,
};
pub use run::{
    match_components, run_replicate, run_replicates, sweep, CoefficientRecord, ComponentRecord,
    ReplicateOutcome, ReplicateRecord,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every eigenvalue is lognormal noise; all slopes are zero.
    Null,
    /// Selected eigenvalues follow the log-linear model.
    Alternative,
}

/// One eigenvector column whose eigenvalue follows the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalComponent {
    pub name: String,
    /// Column of the eigenvector matrix.
    pub column: usize,
    /// `(coefficient index, value)`; index 0 is the intercept and is drawn
    /// per replicate instead.
    pub active: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    pub t_obs: usize,
    pub p: usize,
    pub q: usize,
    pub mode: Mode,
    /// Orthonormal eigenvector matrix, eigenvectors in columns. Defaults to
    /// [`default_eigvecs`].
    pub eigvec_matrix: Option<Matrix<f64>>,
    pub components: Vec<SignalComponent>,
    /// Coefficients scored in every signal component.
    pub targets: Vec<usize>,
    /// Null mode: number of slope coordinates scored, drawn once per scenario.
    pub null_targets: usize,
    pub lognormal_sigma: f64,
    pub intercept_range: (f64, f64),
    pub replicate_count: usize,
    pub b_splits: usize,
    /// Selection-half size; `n/2` when absent.
    pub n1: Option<usize>,
    pub alpha: f64,
    pub lambda: LambdaChoice,
    pub fit: FitConfig,
    pub dfd_threshold: f64,
    /// Upper bound on components fitted per replicate; `p` when absent.
    pub max_components: Option<usize>,
    pub rng_seed: u64,
    /// `(n, T)` cells for a sweep; empty for a single run.
    pub grid: Vec<(usize, usize)>,
    /// `(component, coefficient)` pairs exported by a sweep.
    pub trend_targets: Vec<(String, usize)>,
}

fn reference_components() -> Vec<SignalComponent> {
    vec![
        SignalComponent {
            name: "C2".into(),
            column: 1,
            active: vec![(10, 2.0), (20, 2.0), (30, -2.0)],
        },
        SignalComponent {
            name: "C3".into(),
            column: 2,
            active: vec![(15, 1.0), (25, -1.0), (35, 1.0)],
        },
    ]
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            name: "custom".into(),
            n: 100,
            t_obs: 100,
            p: 5,
            q: 200,
            mode: Mode::Alternative,
            eigvec_matrix: None,
            components: reference_components(),
            targets: vec![10, 15, 20, 25, 30, 35, 40],
            null_targets: 10,
            lognormal_sigma: 0.5,
            intercept_range: (-10.0, 10.0),
            replicate_count: 50,
            b_splits: 100,
            n1: None,
            alpha: 0.05,
            lambda: LambdaChoice::default(),
            fit: FitConfig::default(),
            dfd_threshold: 2.0,
            max_components: None,
            rng_seed: 1,
            grid: Vec::new(),
            trend_targets: vec![("C2".into(), 20), ("C3".into(), 40)],
        }
    }
}

impl ScenarioSpec {
    /// Bundled scenarios by name.
    pub fn preset(name: &str) -> Option<Self> {
        let base = ScenarioSpec {
            name: name.to_string(),
            ..Default::default()
        };
        let spec = match name {
            "q200_small" => base,
            "q200" => ScenarioSpec {
                replicate_count: 200,
                b_splits: 200,
                ..base
            },
            "q500" => ScenarioSpec {
                q: 500,
                replicate_count: 200,
                b_splits: 200,
                ..base
            },
            "p20" => ScenarioSpec {
                p: 20,
                replicate_count: 30,
                ..base
            },
            "sample_size" => ScenarioSpec {
                replicate_count: 20,
                grid: vec![(100, 100), (100, 500), (500, 100), (500, 500)],
                ..base
            },
            "sample_size_full" => ScenarioSpec {
                replicate_count: 200,
                b_splits: 200,
                grid: [100, 200, 500]
                    .iter()
                    .flat_map(|&n| [100, 200, 500].map(|t| (n, t)))
                    .collect(),
                ..base
            },
            "null" => ScenarioSpec {
                mode: Mode::Null,
                replicate_count: 100,
                ..base
            },
            "toy" => ScenarioSpec {
                n: 40,
                t_obs: 40,
                p: 3,
                q: 12,
                components: vec![
                    SignalComponent {
                        name: "C2".into(),
                        column: 1,
                        active: vec![(2, 1.5), (5, -1.5)],
                    },
                    SignalComponent {
                        name: "C3".into(),
                        column: 2,
                        active: vec![(3, 1.0)],
                    },
                ],
                targets: vec![2, 3, 5, 7],
                null_targets: 3,
                intercept_range: (-2.0, 2.0),
                replicate_count: 3,
                b_splits: 10,
                fit: FitConfig {
                    restarts: 2,
                    ..FitConfig::default()
                },
                grid: Vec::new(),
                trend_targets: vec![("C2".into(), 2), ("C3".into(), 7)],
                ..base
            },
            _ => return None,
        };
        Some(spec)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "q200_small",
            "q200",
            "q500",
            "p20",
            "sample_size",
            "sample_size_full",
            "null",
            "toy",
        ]
    }

    pub fn eigvecs(&self) -> Matrix<f64> {
        self.eigvec_matrix
            .clone()
            .unwrap_or_else(|| default_eigvecs(self.p))
    }

    pub fn n1(&self) -> usize {
        self.n1.unwrap_or(self.n / 2)
    }

    pub fn component_limit(&self) -> usize {
        match self.mode {
            Mode::Null => 1,
            Mode::Alternative => self.max_components.unwrap_or(self.p).min(self.p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.p == 0 || self.q == 0 || self.n < 2 {
            return bad("scenario needs p >= 1, q >= 1, n >= 2".into());
        }
        if self.t_obs <= self.p {
            return bad(format!("t_obs={} must exceed p={}", self.t_obs, self.p));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        if self.b_splits < 2 {
            return bad("B>=2 required for the variance estimate".into());
        }
        if !(self.lognormal_sigma >= 0.0) || self.lognormal_sigma.is_infinite() {
            return bad("lognormal_sigma must be finite and >= 0".into());
        }
        let (lo, hi) = self.intercept_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("intercept_range must be finite with lo <= hi".into());
        }
        let n1 = self.n1();
        if n1 < 1 || self.n < n1 + 2 {
            return bad(format!("n1={n1} leaves fewer than 2 subjects for refitting"));
        }
        if !(self.dfd_threshold > 1.0) {
            return bad("dfd_threshold must exceed 1".into());
        }
        let g = self.eigvecs();
        if g.rows() != self.p || g.cols() != self.p {
            return bad(format!("eigvec_matrix must be {0}x{0}", self.p));
        }
        let gram = g.transpose().matmul(&g);
        if gram.max_abs_diff(&Matrix::identity(self.p)) > 1e-10 {
            return bad("eigvec_matrix is not orthonormal to 1e-10".into());
        }
        if self.mode == Mode::Null {
            if self.q < 2 || self.null_targets == 0 || self.null_targets > self.q - 1 {
                return bad("null_targets must lie in 1..q".into());
            }
        } else {
            if self.components.is_empty() {
                return bad("alternative mode needs at least one signal component".into());
            }
            let mut seen = Vec::new();
            for c in &self.components {
                if c.column >= self.p || seen.contains(&c.column) {
                    return bad(format!("component {} has an invalid column", c.name));
                }
                seen.push(c.column);
                if c.active.iter().any(|&(j, v)| j == 0 || j >= self.q || !v.is_finite()) {
                    return bad(format!("component {} has an active index outside 1..q", c.name));
                }
            }
            if self.targets.iter().any(|&j| j == 0 || j >= self.q) {
                return bad("targets must lie in 1..q".into());
            }
            if self.components.len() > self.component_limit() {
                return bad("max_components is smaller than the number of signal components".into());
            }
        }
        self.fit.validate()?;
        Ok(())
    }
}
