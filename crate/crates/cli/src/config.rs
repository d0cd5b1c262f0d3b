//! Run configuration: command-line flags over a JSON config file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use covreg::{Error, FitConfig, LambdaChoice, Result};

pub const SEED_ENV: &str = "COVREG_SEED";

/// Every field optional so that a partial file can be layered under flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    pub scenario: Option<String>,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub cv_folds: Option<usize>,
    pub alpha: Option<f64>,
    #[serde(rename = "B")]
    pub b_splits: Option<usize>,
    pub n1: Option<usize>,
    pub dfd_threshold: Option<f64>,
    pub max_components: Option<usize>,
    pub component: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub restarts: Option<usize>,
    pub replicates: Option<usize>,
    pub strict: Option<bool>,
    pub standardize: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields of `self` override those of `base`.
    pub fn over(self, base: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            data, fit, scenario, out, lambda, cv_folds, alpha, b_splits, n1, dfd_threshold,
            max_components, component, seed, threads, restarts, replicates, strict, standardize
        )
    }
}

/// Resolved settings, written next to every output for replay. Optional
/// fields left unset fall back to the command's defaults (or, for
/// `simulate`, to the scenario's own values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub data: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    pub scenario: Option<String>,
    pub out: PathBuf,
    pub lambda: Option<LambdaChoice>,
    pub alpha: Option<f64>,
    #[serde(rename = "B")]
    pub b_splits: Option<usize>,
    pub n1: Option<usize>,
    pub dfd_threshold: Option<f64>,
    pub max_components: Option<usize>,
    pub component: usize,
    pub seed: Option<u64>,
    pub threads: usize,
    pub restarts: Option<usize>,
    pub replicates: Option<usize>,
    pub strict: bool,
    pub standardize: bool,
}

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_B: usize = 200;
pub const DEFAULT_DFD_THRESHOLD: f64 = 2.0;

impl RunConfig {
    pub fn resolve(command: &str, layered: ConfigFile) -> Result<Self> {
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };
        let lambda = match (layered.lambda, layered.cv_folds) {
            (Some(l), _) => Some(LambdaChoice::Fixed(l)),
            (None, Some(k)) => match LambdaChoice::default() {
                LambdaChoice::CrossValidated {
                    grid_size, min_ratio, ..
                } => Some(LambdaChoice::CrossValidated {
                    folds: k,
                    grid_size,
                    min_ratio,
                }),
                fixed => Some(fixed),
            },
            (None, None) => None,
        };
        let cfg = RunConfig {
            command: command.to_string(),
            data: layered.data,
            fit: layered.fit,
            scenario: layered.scenario,
            out: layered.out.unwrap_or_else(|| PathBuf::from(".")),
            lambda,
            alpha: layered.alpha,
            b_splits: layered.b_splits,
            n1: layered.n1,
            dfd_threshold: layered.dfd_threshold,
            max_components: layered.max_components,
            component: layered.component.unwrap_or(0),
            seed: layered.seed.or(env_seed),
            threads: layered.threads.unwrap_or(0),
            restarts: layered.restarts,
            replicates: layered.replicates,
            strict: layered.strict.unwrap_or(false),
            standardize: layered.standardize.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.lambda {
            Some(LambdaChoice::Fixed(l)) if !l.is_finite() || l < 0.0 => {
                return Err(Error::Config(format!("lambda must be finite and >= 0, got {l}")));
            }
            Some(LambdaChoice::CrossValidated { folds, .. }) if folds < 2 => {
                return Err(Error::Config(format!("cv-folds must be >= 2, got {folds}")));
            }
            _ => {}
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("alpha must lie in (0,1), got {a}")));
            }
        }
        if let Some(d) = self.dfd_threshold {
            if !(d > 1.0) || !d.is_finite() {
                return Err(Error::Config(format!("dfd-threshold must be finite and > 1, got {d}")));
            }
        }
        if matches!(self.b_splits, Some(b) if b < 2) {
            return Err(Error::Config("B>=2 required for the variance estimate".into()));
        }
        if self.restarts == Some(0) {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if self.replicates == Some(0) {
            return Err(Error::Config("replicates must be positive".into()));
        }
        Ok(())
    }

    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn fit_config(&self) -> FitConfig {
        let d = FitConfig::default();
        FitConfig {
            restarts: self.restarts.unwrap_or(d.restarts),
            rng_seed: self.seed_or_default(),
            ..d
        }
    }
}
