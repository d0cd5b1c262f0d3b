use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use covreg::data::{load_dataset, Dataset};
use covreg::estimate::{select_components, ComponentSet, LambdaChoice, PenaltySpec};
use covreg::infer::{InferenceReport, SplitPlan, VarianceEstimate};
use covreg::sim::{run_replicates, sweep, ScenarioSpec, SimReport, SweepReport};
use covreg::{Error, Result};

use crate::config::{RunConfig, DEFAULT_ALPHA, DEFAULT_B, DEFAULT_DFD_THRESHOLD};
use crate::Failure;

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_threads<F>(threads: usize, f: F) -> Result<(), Failure>
where
    F: FnOnce() -> Result<(), Failure> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(f)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn open(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Serialize)]
struct RunMetadata<'a, E: Serialize> {
    version: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    extra: E,
}

fn write_metadata<E: Serialize>(cfg: &RunConfig, extra: E) -> Result<()> {
    write_json(
        &cfg.out.join("run.json"),
        &RunMetadata {
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            extra,
        },
    )
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn load(cfg: &RunConfig) -> Result<Dataset<f64>> {
    let data = load_dataset::<f64>(required(&cfg.data, "data")?)?;
    Ok(if cfg.standardize {
        data.standardize_covariates()
    } else {
        data
    })
}

pub fn fit(cfg: &RunConfig) -> Result<(), Failure> {
    let data = load(cfg)?;
    create_out(&cfg.out)?;
    let moments = data.moments();
    let set = select_components(
        &moments,
        &PenaltySpec::lasso(0.0),
        &cfg.lambda.clone().unwrap_or_default(),
        &cfg.fit_config(),
        cfg.dfd_threshold.unwrap_or(DEFAULT_DFD_THRESHOLD),
        cfg.max_components.unwrap_or(data.p()),
    )?;
    write_json(&cfg.out.join("fit.json"), &set)?;
    write_metadata(cfg, serde_json::json!({ "seed": cfg.seed_or_default() }))?;
    println!(
        "fitted {} component(s) on n={} p={} q={}; DfD {:?}",
        set.components.len(),
        data.n(),
        data.p(),
        data.q(),
        set.dfd_values
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitDiagnostics<'a> {
    variance: &'a VarianceEstimate<f64>,
    supports: Vec<&'a [usize]>,
}

pub fn infer(cfg: &RunConfig) -> Result<(), Failure> {
    let data = load(cfg)?;
    let set: ComponentSet<f64> = read_json(required(&cfg.fit, "fit")?)?;
    let component = set.components.get(cfg.component).ok_or_else(|| {
        Error::Config(format!(
            "component {} requested but the fit has {}",
            cfg.component,
            set.components.len()
        ))
    })?;
    if component.gamma.len() != data.p() || component.beta.beta.len() != data.q() {
        return Err(Error::DimensionMismatch {
            subject: 0,
            expected: format!("fit for p={} q={}", data.p(), data.q()),
            found: format!(
                "gamma of length {} and beta of length {}",
                component.gamma.len(),
                component.beta.beta.len()
            ),
        }
        .into());
    }
    let lambda = match cfg.lambda {
        Some(LambdaChoice::Fixed(l)) => l,
        _ => component.lambda,
    };
    let n = data.n();
    let plan = SplitPlan::with_n1(
        n,
        cfg.n1.unwrap_or(n / 2),
        cfg.b_splits.unwrap_or(DEFAULT_B),
        cfg.seed_or_default(),
    );
    let alpha = cfg.alpha.unwrap_or(DEFAULT_ALPHA);
    create_out(&cfg.out)?;
    let run = covreg::infer::infer(
        &data.moments(),
        &component.gamma,
        &PenaltySpec::lasso(lambda),
        &plan,
        alpha,
        cfg.fit_config().beta_solver_tol,
    )?;
    let report = InferenceReport::new(&run.smoothed, &run.variance, &plan, lambda);
    write_json(&cfg.out.join("inference.json"), &report)?;
    report.write_csv(open(&cfg.out.join("inference.csv"))?)?;
    write_json(
        &cfg.out.join("inference_diagnostics.json"),
        &SplitDiagnostics {
            variance: &run.variance,
            supports: run.splits.results.iter().map(|r| r.support.as_slice()).collect(),
        },
    )?;
    write_metadata(cfg, serde_json::json!({ "split_plan": plan, "lambda": lambda }))?;
    let truncated = report.coefficients.iter().filter(|r| r.truncated_variance).count();
    if truncated > 0 {
        log::warn!("{truncated} variance estimate(s) truncated to zero");
    }
    println!(
        "inference for component {} with B={} n1={} n2={}: {} coefficients written",
        cfg.component,
        plan.b_splits,
        plan.n1,
        plan.n2,
        report.coefficients.len()
    );
    Ok(())
}

fn scenario(cfg: &RunConfig) -> Result<ScenarioSpec> {
    let name = cfg
        .scenario
        .as_deref()
        .ok_or_else(|| Error::Config("--scenario is required".into()))?;
    let mut spec = match ScenarioSpec::preset(name) {
        Some(s) => s,
        None => {
            let path = Path::new(name);
            if !path.exists() {
                return Err(Error::Io {
                    path: path.to_path_buf(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!(
                            "not a bundled scenario ({}) or an existing file",
                            ScenarioSpec::preset_names().join(", ")
                        ),
                    ),
                });
            }
            read_json(path)?
        }
    };
    if let Some(r) = cfg.replicates {
        spec.replicate_count = r;
    }
    if let Some(b) = cfg.b_splits {
        spec.b_splits = b;
    }
    if cfg.n1.is_some() {
        spec.n1 = cfg.n1;
    }
    if let Some(a) = cfg.alpha {
        spec.alpha = a;
    }
    if let Some(l) = &cfg.lambda {
        spec.lambda = l.clone();
    }
    if let Some(d) = cfg.dfd_threshold {
        spec.dfd_threshold = d;
    }
    if let Some(r) = cfg.restarts {
        spec.fit.restarts = r;
    }
    if let Some(s) = cfg.seed {
        spec.rng_seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn strict_check(cfg: &RunConfig, failures: usize, total: usize) -> Result<(), Failure> {
    if failures == 0 {
        return Ok(());
    }
    let msg = format!("{failures} of {total} replicate(s) failed");
    if cfg.strict {
        return Err(Failure::Strict(msg));
    }
    log::warn!("{msg}");
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let spec = scenario(cfg)?;
    create_out(&cfg.out)?;
    write_json(&cfg.out.join("scenario.json"), &spec)?;
    write_metadata(cfg, serde_json::json!({ "seed": spec.rng_seed, "scenario": spec.name }))?;
    if spec.grid.is_empty() {
        let report = run_replicates(&spec)?;
        write_sim_report(&report, &cfg.out)?;
        print_sim(&report);
        strict_check(cfg, report.failures, report.replicate_count)
    } else {
        let report = sweep(&spec)?;
        write_sweep(&report, &cfg.out)?;
        print_sweep(&report);
        let failures = report.cells.iter().map(|c| c.report.failures).sum();
        let total = report.cells.iter().map(|c| c.report.replicate_count).sum();
        strict_check(cfg, failures, total)
    }
}

fn write_sim_report(report: &SimReport, out: &Path) -> Result<()> {
    write_json(&out.join("report.json"), report)?;
    report.write_csv(open(&out.join("report.csv"))?)?;
    report.write_gamma_csv(open(&out.join("gamma.csv"))?)
}

fn write_sweep(report: &SweepReport, out: &Path) -> Result<()> {
    write_json(&out.join("sweep.json"), report)?;
    report.write_trend_csv(open(&out.join("trend.csv"))?)?;
    for cell in &report.cells {
        let name = format!("report_n{}_t{}.csv", cell.n, cell.t_obs);
        cell.report.write_csv(open(&out.join(name))?)?;
    }
    Ok(())
}

fn print_sim(r: &SimReport) {
    println!(
        "{}: {} of {} replicates completed ({:.1}s)",
        r.scenario, r.completed, r.replicate_count, r.runtime_secs
    );
    println!(
        "{:<6} {:>5} {:>8} {:>9} {:>8} {:>8} {:>6} {:>9}",
        "comp", "coef", "truth", "estimate", "emp.se", "mod.se", "CP", "MSE"
    );
    for c in &r.coefficients {
        println!(
            "{:<6} {:>5} {:>8.3} {:>9.4} {:>8.4} {:>8.4} {:>6.3} {:>9.5}",
            c.component, c.coefficient, c.truth, c.mean_estimate, c.empirical_se, c.mean_model_se, c.coverage, c.mse
        );
    }
    for g in &r.gammas {
        println!("{:<6} |<gamma_hat, gamma*>| = {:.3} ({:.3})", g.component, g.mean_abs_inner, g.se);
    }
    for m in &r.failure_messages {
        println!("failed: {m}");
    }
}

fn print_sweep(s: &SweepReport) {
    println!("{:>5} {:>5} {:<6} {:>5} {:>9} {:>6} {:>9}", "n", "T", "comp", "coef", "estimate", "CP", "MSE");
    for cell in &s.cells {
        for (comp, j) in &s.trend_targets {
            if let Some(c) = cell.report.coefficient(comp, *j) {
                println!(
                    "{:>5} {:>5} {:<6} {:>5} {:>9.4} {:>6.3} {:>9.5}",
                    cell.n, cell.t_obs, comp, j, c.mean_estimate, c.coverage, c.mse
                );
            }
        }
    }
}

fn print_inference(r: &InferenceReport) {
    let m = &r.metadata;
    println!(
        "B={} n1={} n2={} lambda={} alpha={} seed={}",
        m.b_splits, m.n1, m.n2, m.lambda, m.alpha, m.seed
    );
    println!("{:>5} {:>10} {:>10} {:>10} {:>10} {:>9}", "j", "beta_hat", "se", "ci_lower", "ci_upper", "p");
    for row in &r.coefficients {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>9.2e}{}",
            row.j,
            row.beta_hat,
            row.v_hat.sqrt(),
            row.ci_lower,
            row.ci_upper,
            row.p_value,
            if row.truncated_variance { "  (truncated)" } else { "" }
        );
    }
}

fn print_fit(set: &ComponentSet<f64>) {
    for (k, c) in set.components.iter().enumerate() {
        let nnz: Vec<usize> = (1..c.beta.beta.len())
            .filter(|&j| c.beta.beta[j].abs() > covreg::infer::SUPPORT_THRESHOLD)
            .collect();
        println!(
            "component {k}: lambda={:.4} objective={:.6} converged={} DfD={:.4} nonzero slopes {:?}",
            c.lambda,
            c.final_objective(),
            c.converged,
            set.dfd_values[k],
            nnz
        );
    }
}

/// Pretty-prints any JSON output of the other commands, optionally
/// re-exporting its tables as CSV.
pub fn report(input: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let value: serde_json::Value = read_json(input)?;
    let has = |k: &str| value.get(k).is_some();
    let bad = |e: serde_json::Error| Error::Manifest {
        path: input.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = out {
        create_out(dir)?;
    }
    if has("cells") {
        let r: SweepReport = serde_json::from_value(value).map_err(bad)?;
        print_sweep(&r);
        if let Some(dir) = out {
            r.write_trend_csv(open(&dir.join("trend.csv"))?)?;
        }
    } else if has("gammas") {
        let r: SimReport = serde_json::from_value(value).map_err(bad)?;
        print_sim(&r);
        if let Some(dir) = out {
            r.write_csv(open(&dir.join("report.csv"))?)?;
            r.write_gamma_csv(open(&dir.join("gamma.csv"))?)?;
        }
    } else if has("metadata") {
        let r: InferenceReport = serde_json::from_value(value).map_err(bad)?;
        print_inference(&r);
        if let Some(dir) = out {
            r.write_csv(open(&dir.join("inference.csv"))?)?;
        }
    } else if has("dfd_values") {
        let r: ComponentSet<f64> = serde_json::from_value(value).map_err(bad)?;
        print_fit(&r);
    } else {
        return Err(Error::Manifest {
            path: input.to_path_buf(),
            message: "not a fit, inference, simulation or sweep output".into(),
        }
        .into());
    }
    Ok(())
}
