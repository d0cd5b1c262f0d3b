use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Projection;
use crate::error::{Error, Result};
use crate::estimate::{select_components, FitConfig, PenaltySpec};
use crate::infer::{infer, SplitPlan};
use crate::linalg::{dot, norm2};
use crate::rng::{self, derive_seed, domain};

use super::generate::generate_dataset;
use super::report::{SimReport, SweepCell, SweepReport};
use super::{Mode, ScenarioSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub j: usize,
    pub truth: f64,
    pub beta_hat: f64,
    pub v_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub name: String,
    /// Position of the matched estimate among the fitted components.
    pub estimate_index: usize,
    /// `|<gamma_hat, gamma*>|` with both scaled to unit length; absent in
    /// null mode.
    pub abs_inner: Option<f64>,
    pub lambda: f64,
    pub coefficients: Vec<CoefficientRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub components: Vec<ComponentRecord>,
    pub fitted_components: usize,
    pub dfd_values: Vec<f64>,
    /// Largest increase along any retained fit's objective trace.
    pub max_objective_increase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ReplicateOutcome {
    Completed(ReplicateRecord),
    Failed { index: usize, message: String },
}

/// Injective assignment of estimates to truths maximizing the total
/// `|<unit estimate, unit truth>|`, by exhaustive search. A truth is left
/// unmatched only when estimates run out.
pub fn match_components(truths: &[Vec<f64>], estimates: &[Vec<f64>]) -> Vec<Option<usize>> {
    let unit = |v: &Vec<f64>| {
        let n = norm2(v);
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let t: Vec<Vec<f64>> = truths.iter().map(unit).collect();
    let e: Vec<Vec<f64>> = estimates.iter().map(unit).collect();
    let score: Vec<Vec<f64>> = t
        .iter()
        .map(|ti| e.iter().map(|ej| dot(ti, ej).abs()).collect())
        .collect();
    let required = truths.len().min(estimates.len());

    fn search(
        k: usize,
        score: &[Vec<f64>],
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        total: f64,
        required: usize,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if k == score.len() {
            let assigned = current.iter().filter(|c| c.is_some()).count();
            if assigned == required && total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                current.push(Some(j));
                search(k + 1, score, used, current, total + score[k][j], required, best);
                current.pop();
                used[j] = false;
            }
        }
        current.push(None);
        search(k + 1, score, used, current, total, required, best);
        current.pop();
    }

    let mut best = (f64::NEG_INFINITY, vec![None; truths.len()]);
    search(
        0,
        &score,
        &mut vec![false; estimates.len()],
        &mut Vec::new(),
        0.0,
        required,
        &mut best,
    );
    best.1
}

/// Null-mode slope coordinates, fixed for the whole scenario.
fn null_targets(spec: &ScenarioSpec) -> Vec<usize> {
    let mut rng = rng::stream(spec.rng_seed, &[domain::TARGETS]);
    let mut picked: Vec<usize> = sample(&mut rng, spec.q - 1, spec.null_targets)
        .into_iter()
        .map(|j| j + 1)
        .collect();
    picked.sort_unstable();
    picked
}

/// Generate, fit, match, infer and score one replicate.
pub fn run_replicate(spec: &ScenarioSpec, index: usize) -> Result<ReplicateRecord> {
    let seed = spec.rng_seed;
    let mut data_rng = rng::stream(seed, &[domain::REPLICATE, index as u64]);
    let (dataset, truth) = generate_dataset(spec, &mut data_rng)?;
    let moments = dataset.moments();
    let fit_config = FitConfig {
        rng_seed: derive_seed(seed, &[domain::FIT, index as u64]),
        ..spec.fit.clone()
    };
    let set = select_components(
        &moments,
        &PenaltySpec::lasso(0.0),
        &spec.lambda,
        &fit_config,
        spec.dfd_threshold,
        spec.component_limit(),
    )?;
    if set.components.is_empty() {
        return Err(Error::Config("no component passed the DfD threshold".into()));
    }

    // (name, estimate index, truth gamma, truth beta, scored coefficients)
    type Target = (String, usize, Option<Vec<f64>>, Vec<f64>, Vec<usize>);
    let plan_targets: Vec<Target> = match spec.mode {
        Mode::Null => vec![("null".into(), 0, None, vec![0.0; spec.q], null_targets(spec))],
        Mode::Alternative => {
            let truths: Vec<Vec<f64>> = truth.components.iter().map(|c| c.gamma.clone()).collect();
            let estimates: Vec<Vec<f64>> = set.components.iter().map(|c| c.gamma.unit()).collect();
            let matched = match_components(&truths, &estimates);
            let mut out = Vec::new();
            for (c, m) in truth.components.iter().zip(matched) {
                let e = m.ok_or_else(|| {
                    Error::Config(format!(
                        "component {} unmatched: only {} component(s) retained",
                        c.name,
                        set.components.len()
                    ))
                })?;
                out.push((c.name.clone(), e, Some(c.gamma.clone()), c.beta.clone(), spec.targets.clone()));
            }
            out
        }
    };

    let tol = spec.fit.beta_solver_tol;
    let mut components = Vec::with_capacity(plan_targets.len());
    for (k, (name, e, true_gamma, true_beta, targets)) in plan_targets.into_iter().enumerate() {
        let fit = &set.components[e];
        let plan = SplitPlan::with_n1(
            spec.n,
            spec.n1(),
            spec.b_splits,
            derive_seed(seed, &[domain::INFER, index as u64, k as u64]),
        );
        let gamma: &Projection<f64> = &fit.gamma;
        let run = infer(&moments, gamma, &PenaltySpec::lasso(fit.lambda), &plan, spec.alpha, tol)?;
        let s = &run.smoothed;
        let coefficients = targets
            .iter()
            .map(|&j| CoefficientRecord {
                j,
                truth: true_beta[j],
                beta_hat: s.beta_hat[j],
                v_hat: s.v_hat[j],
                ci_lower: s.ci_lower[j],
                ci_upper: s.ci_upper[j],
                covered: s.ci_lower[j] <= true_beta[j] && true_beta[j] <= s.ci_upper[j],
            })
            .collect();
        let abs_inner = true_gamma.map(|g| dot(&g, &gamma.unit()).abs() / norm2(&g));
        components.push(ComponentRecord {
            name,
            estimate_index: e,
            abs_inner,
            lambda: fit.lambda,
            coefficients,
        });
    }

    Ok(ReplicateRecord {
        index,
        components,
        fitted_components: set.components.len(),
        dfd_values: set.dfd_values.clone(),
        max_objective_increase: set
            .components
            .iter()
            .map(|c| c.max_objective_increase())
            .fold(0.0, f64::max),
    })
}

/// All replicates of a scenario; failures are recorded, not fatal.
pub fn run_replicates(spec: &ScenarioSpec) -> Result<SimReport> {
    spec.validate()?;
    let start = Instant::now();
    let outcomes: Vec<ReplicateOutcome> = (0..spec.replicate_count)
        .into_par_iter()
        .map(|r| match run_replicate(spec, r) {
            Ok(rec) => ReplicateOutcome::Completed(rec),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                ReplicateOutcome::Failed {
                    index: r,
                    message: e.to_string(),
                }
            }
        })
        .collect();
    Ok(SimReport::aggregate(spec, outcomes, start.elapsed().as_secs_f64()))
}

/// One report per `(n, T)` cell of `spec.grid` (or the spec itself when the
/// grid is empty); every cell uses the scenario seed.
pub fn sweep(spec: &ScenarioSpec) -> Result<SweepReport> {
    let cells: Vec<(usize, usize)> = if spec.grid.is_empty() {
        vec![(spec.n, spec.t_obs)]
    } else {
        spec.grid.clone()
    };
    let mut out = Vec::with_capacity(cells.len());
    for (n, t_obs) in cells {
        let cell_spec = ScenarioSpec {
            n,
            t_obs,
            grid: Vec::new(),
            ..spec.clone()
        };
        log::info!("sweep cell n={n} T={t_obs}");
        out.push(SweepCell {
            n,
            t_obs,
            report: run_replicates(&cell_spec)?,
        });
    }
    Ok(SweepReport {
        scenario: spec.name.clone(),
        trend_targets: spec.trend_targets.clone(),
        cells: out,
    })
}
