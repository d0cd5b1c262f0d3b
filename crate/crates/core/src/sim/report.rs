use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::run::{ReplicateOutcome, ReplicateRecord};
use super::ScenarioSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub component: String,
    pub coefficient: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    /// Standard deviation of the estimates across replicates.
    pub empirical_se: f64,
    /// Mean of `sqrt(V_hat)`.
    pub mean_model_se: f64,
    pub coverage: f64,
    pub mse: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub component: String,
    pub mean_abs_inner: f64,
    /// Standard deviation across replicates.
    pub se: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub max_objective_increase: f64,
    pub min_dfd: f64,
    pub mean_fitted_components: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub replicate_count: usize,
    pub completed: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub coefficients: Vec<CoefficientSummary>,
    pub gammas: Vec<GammaSummary>,
    pub diagnostics: SimDiagnostics,
    pub replicates: Vec<ReplicateOutcome>,
    /// Wall-clock time; excluded from [`SimReport::same_results`].
    pub runtime_secs: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl SimReport {
    /// Summaries in replicate-index order, so the result does not depend on
    /// how replicates were scheduled.
    pub fn aggregate(spec: &ScenarioSpec, mut outcomes: Vec<ReplicateOutcome>, runtime_secs: f64) -> Self {
        outcomes.sort_by_key(|o| match o {
            ReplicateOutcome::Completed(r) => r.index,
            ReplicateOutcome::Failed { index, .. } => *index,
        });
        let records: Vec<&ReplicateRecord> = outcomes
            .iter()
            .filter_map(|o| match o {
                ReplicateOutcome::Completed(r) => Some(r),
                _ => None,
            })
            .collect();
        let failure_messages: Vec<String> = outcomes
            .iter()
            .filter_map(|o| match o {
                ReplicateOutcome::Failed { index, message } => Some(format!("replicate {index}: {message}")),
                _ => None,
            })
            .collect();

        // Keyed by (component order of first appearance, coefficient).
        let mut order: Vec<String> = Vec::new();
        // (truth, estimates, model standard errors, coverage flags)
        type Samples = (f64, Vec<f64>, Vec<f64>, Vec<bool>);
        let mut coef: BTreeMap<(usize, usize), Samples> = BTreeMap::new();
        let mut inner: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &records {
            for c in &r.components {
                let k = match order.iter().position(|n| n == &c.name) {
                    Some(k) => k,
                    None => {
                        order.push(c.name.clone());
                        order.len() - 1
                    }
                };
                if let Some(a) = c.abs_inner {
                    inner.entry(k).or_default().push(a);
                }
                for cr in &c.coefficients {
                    let e = coef
                        .entry((k, cr.j))
                        .or_insert_with(|| (cr.truth, Vec::new(), Vec::new(), Vec::new()));
                    e.1.push(cr.beta_hat);
                    e.2.push(cr.v_hat.max(0.0).sqrt());
                    e.3.push(cr.covered);
                }
            }
        }
        let coefficients = coef
            .into_iter()
            .map(|((k, j), (truth, est, se, cov))| CoefficientSummary {
                component: order[k].clone(),
                coefficient: j,
                truth,
                mean_estimate: mean(&est),
                empirical_se: sd(&est),
                mean_model_se: mean(&se),
                coverage: cov.iter().filter(|&&c| c).count() as f64 / cov.len() as f64,
                mse: mean(&est.iter().map(|b| (b - truth) * (b - truth)).collect::<Vec<_>>()),
                count: est.len(),
            })
            .collect();
        let gammas = inner
            .into_iter()
            .map(|(k, v)| GammaSummary {
                component: order[k].clone(),
                mean_abs_inner: mean(&v),
                se: sd(&v),
                count: v.len(),
            })
            .collect();
        let diagnostics = SimDiagnostics {
            max_objective_increase: records
                .iter()
                .map(|r| r.max_objective_increase)
                .fold(0.0, f64::max),
            min_dfd: records
                .iter()
                .flat_map(|r| r.dfd_values.iter().copied())
                .fold(f64::INFINITY, f64::min),
            mean_fitted_components: mean(
                &records.iter().map(|r| r.fitted_components as f64).collect::<Vec<_>>(),
            ),
        };
        SimReport {
            scenario: spec.name.clone(),
            replicate_count: spec.replicate_count,
            completed: records.len(),
            failures: failure_messages.len(),
            failure_messages,
            coefficients,
            gammas,
            diagnostics,
            replicates: outcomes,
            runtime_secs,
        }
    }

    pub fn coefficient(&self, component: &str, j: usize) -> Option<&CoefficientSummary> {
        self.coefficients
            .iter()
            .find(|c| c.component == component && c.coefficient == j)
    }

    pub fn gamma(&self, component: &str) -> Option<&GammaSummary> {
        self.gammas.iter().find(|g| g.component == component)
    }

    /// Coverage pooled over every scored coefficient of `component`.
    pub fn pooled_coverage(&self, component: &str) -> Option<f64> {
        let rows: Vec<&CoefficientSummary> =
            self.coefficients.iter().filter(|c| c.component == component).collect();
        let total: usize = rows.iter().map(|c| c.count).sum();
        if total == 0 {
            return None;
        }
        Some(rows.iter().map(|c| c.coverage * c.count as f64).sum::<f64>() / total as f64)
    }

    pub fn records(&self) -> impl Iterator<Item = &ReplicateRecord> {
        self.replicates.iter().filter_map(|o| match o {
            ReplicateOutcome::Completed(r) => Some(r),
            _ => None,
        })
    }

    /// Equality of everything except the runtime.
    pub fn same_results(&self, other: &SimReport) -> bool {
        SimReport {
            runtime_secs: 0.0,
            ..self.clone()
        } == SimReport {
            runtime_secs: 0.0,
            ..other.clone()
        }
    }

    /// One row per scored coefficient.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.coefficients {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_gamma_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.gammas {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub t_obs: usize,
    pub report: SimReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub trend_targets: Vec<(String, usize)>,
    pub cells: Vec<SweepCell>,
}

#[derive(Serialize)]
struct TrendRow<'a> {
    n: usize,
    t_obs: usize,
    component: &'a str,
    coefficient: usize,
    truth: f64,
    mean_estimate: f64,
    coverage: f64,
    mse: f64,
    count: usize,
}

impl SweepReport {
    /// Estimate, coverage and MSE of the trend targets for every cell.
    pub fn write_trend_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for cell in &self.cells {
            for (component, j) in &self.trend_targets {
                if let Some(c) = cell.report.coefficient(component, *j) {
                    w.serialize(TrendRow {
                        n: cell.n,
                        t_obs: cell.t_obs,
                        component,
                        coefficient: *j,
                        truth: c.truth,
                        mean_estimate: c.mean_estimate,
                        coverage: c.coverage,
                        mse: c.mse,
                        count: c.count,
                    })?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn cell(&self, n: usize, t_obs: usize) -> Option<&SimReport> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.t_obs == t_obs)
            .map(|c| &c.report)
    }
}
