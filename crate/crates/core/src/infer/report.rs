use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Real;

use super::{SmoothedInference, SplitPlan, VarianceEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceRow {
    pub j: usize,
    pub beta_hat: f64,
    pub v_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
    pub truncated_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceMetadata {
    #[serde(rename = "B")]
    pub b_splits: usize,
    pub n1: usize,
    pub n2: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub metadata: InferenceMetadata,
    pub coefficients: Vec<InferenceRow>,
}

impl InferenceReport {
    pub fn new<T: Real>(
        smoothed: &SmoothedInference<T>,
        variance: &VarianceEstimate<T>,
        plan: &SplitPlan,
        lambda: T,
    ) -> Self {
        let coefficients = (0..smoothed.beta_hat.len())
            .map(|j| InferenceRow {
                j,
                beta_hat: smoothed.beta_hat[j].to_f64_lossy(),
                v_hat: smoothed.v_hat[j].to_f64_lossy(),
                ci_lower: smoothed.ci_lower[j].to_f64_lossy(),
                ci_upper: smoothed.ci_upper[j].to_f64_lossy(),
                p_value: smoothed.p_values[j].to_f64_lossy(),
                truncated_variance: variance.truncated[j],
            })
            .collect();
        InferenceReport {
            metadata: InferenceMetadata {
                b_splits: plan.b_splits,
                n1: plan.n1,
                n2: plan.n2,
                lambda: lambda.to_f64_lossy(),
                alpha: smoothed.alpha,
                seed: plan.rng_seed,
            },
            coefficients,
        }
    }

    /// One row per coefficient, with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.coefficients {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
