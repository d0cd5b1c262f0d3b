//! `covreg` command-line front end.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 solver failure,
//! 4 replicate failures under `--strict`. Failures print one line to stderr
//! starting with `E_INPUT`, `E_CONFIG`, `E_SOLVER` or `E_STRICT`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigFile;
use covreg::Error;

#[derive(Parser, Debug)]
#[command(name = "covreg", version, about = "Penalized covariance regression with split-and-smooth inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate projection components and coefficients from a dataset.
    Fit(FitArgs),
    /// Confidence intervals and p-values for one fitted component.
    Infer(InferArgs),
    /// Run a bundled or JSON-defined simulation scenario.
    Simulate(SimulateArgs),
    /// Summarize a JSON output of another command.
    Report(ReportArgs),
}

fn finite_nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a finite non-negative number, got {s}"))
    }
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got {s}"))
    }
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed (falls back to $COVREG_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for restarts, splits and replicates (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct PenaltyArgs {
    /// Fixed penalty level; cross-validated when absent.
    #[arg(long, value_parser = finite_nonneg)]
    lambda: Option<f64>,
    /// Folds for cross-validating lambda.
    #[arg(long)]
    cv_folds: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Stop adding components once the average DfD exceeds this (default 2).
    #[arg(long, value_parser = finite)]
    dfd_threshold: Option<f64>,
    /// Upper bound on the number of components (default p).
    #[arg(long)]
    max_components: Option<usize>,
    /// Random initializations per fit (default 5).
    #[arg(long)]
    restarts: Option<usize>,
    /// Center and scale the non-intercept covariates first.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    /// fit.json written by `covreg fit`.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Which fitted component to analyse.
    #[arg(long)]
    component: Option<usize>,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Significance level of the intervals (default 0.05).
    #[arg(long, value_parser = finite)]
    alpha: Option<f64>,
    /// Number of sample splits (default 200).
    #[arg(long = "B")]
    b_splits: Option<usize>,
    /// Size of the selection half (default n/2).
    #[arg(long)]
    n1: Option<usize>,
    /// Center and scale the non-intercept covariates first (match the fit).
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Bundled scenario name or path to a scenario JSON file.
    #[arg(long)]
    scenario: Option<String>,
    /// Override the scenario's replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Override the number of sample splits.
    #[arg(long = "B")]
    b_splits: Option<usize>,
    /// Override the selection-half size.
    #[arg(long)]
    n1: Option<usize>,
    /// Override the significance level.
    #[arg(long, value_parser = finite)]
    alpha: Option<f64>,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Override the DfD threshold.
    #[arg(long, value_parser = finite)]
    dfd_threshold: Option<f64>,
    /// Override the restarts per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Exit 4 if any replicate fails.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// report.json, sweep.json, inference.json or fit.json.
    #[arg(long)]
    input: PathBuf,
    /// Also write CSV tables here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

fn layered(common: &Common, flags: ConfigFile) -> covreg::Result<ConfigFile> {
    let flags = ConfigFile {
        out: common.out.clone(),
        seed: common.seed,
        threads: common.threads,
        ..flags
    };
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    Ok(flags.over(file))
}

/// Failure classes of a command, mapped onto exit codes.
pub enum Failure {
    Error(Error),
    Strict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fit(a) => {
            let flags = ConfigFile {
                data: a.data,
                lambda: a.penalty.lambda,
                cv_folds: a.penalty.cv_folds,
                dfd_threshold: a.dfd_threshold,
                max_components: a.max_components,
                restarts: a.restarts,
                standardize: flag(a.standardize),
                ..Default::default()
            };
            let cfg = config::RunConfig::resolve("fit", layered(&a.common, flags)?)?;
            commands::with_threads(cfg.threads, || commands::fit(&cfg))
        }
        Command::Infer(a) => {
            let flags = ConfigFile {
                data: a.data,
                fit: a.fit,
                component: a.component,
                lambda: a.penalty.lambda,
                cv_folds: a.penalty.cv_folds,
                alpha: a.alpha,
                b_splits: a.b_splits,
                n1: a.n1,
                standardize: flag(a.standardize),
                ..Default::default()
            };
            let cfg = config::RunConfig::resolve("infer", layered(&a.common, flags)?)?;
            commands::with_threads(cfg.threads, || commands::infer(&cfg))
        }
        Command::Simulate(a) => {
            let flags = ConfigFile {
                scenario: a.scenario,
                replicates: a.replicates,
                b_splits: a.b_splits,
                n1: a.n1,
                alpha: a.alpha,
                lambda: a.penalty.lambda,
                cv_folds: a.penalty.cv_folds,
                dfd_threshold: a.dfd_threshold,
                restarts: a.restarts,
                strict: flag(a.strict),
                ..Default::default()
            };
            let cfg = config::RunConfig::resolve("simulate", layered(&a.common, flags)?)?;
            commands::with_threads(cfg.threads, || commands::simulate(&cfg))
        }
        Command::Report(a) => commands::report(&a.input, a.out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("E_CONFIG {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Strict(msg)) => {
            eprintln!("E_STRICT {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Error(e)) => {
            let one_line = |s: String| s.replace('\n', " ");
            match e {
                Error::Config(m) => {
                    eprintln!("E_CONFIG {}", one_line(m));
                    ExitCode::from(2)
                }
                e if e.is_input_error() => {
                    eprintln!("E_INPUT {}", one_line(e.to_string()));
                    ExitCode::from(2)
                }
                e => {
                    eprintln!("E_SOLVER {}", one_line(e.to_string()));
                    ExitCode::from(3)
                }
            }
        }
    }
}
