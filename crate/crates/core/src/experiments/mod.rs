//! Simulation studies, error metrics and the paired t-test.
//!
//! Reports are flat tables: one row per (experiment, index, metric) where the
//! index is the series length for convergence runs and the iteration number
//! for prediction runs. Replicate `r` of a study seeded with `seed` draws all
//! of its randomness from `derive_seed(seed, r)`.

mod convergence;
mod metrics;
mod prediction;
mod ttest;

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use convergence::{convergence_study, ConvergenceDesign, ConvergenceOutcome, CurvePoint, LineFit};
pub use metrics::{mean_squared_error, network_rmse, per_node_rmse};
pub use prediction::{prediction_study, PredictionDesign, PredictionOutcome, PredictionReplicate};
pub use ttest::{paired_t_test, student_t_cdf, Alternative, TTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Scaled Frobenius distance between estimated and true networks.
    NetworkRmse,
    SimamTrainMse,
    SimamTestMse,
    LassoTrainMse,
    LassoTestMse,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::NetworkRmse => "network_rmse",
            Metric::SimamTrainMse => "simam_train_mse",
            Metric::SimamTestMse => "simam_test_mse",
            Metric::LassoTrainMse => "lasso_train_mse",
            Metric::LassoTestMse => "lasso_test_mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    /// Series length or iteration, depending on the experiment.
    pub index: usize,
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation; absent with a single replicate.
    pub sd: Option<f64>,
    /// Replicates that contributed.
    pub replicates: usize,
    /// Replicates whose fit failed and were left out.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub config_digest: String,
    pub wall_time_secs: f64,
    pub failed_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

impl ExperimentReport {
    pub fn rows_for(&self, metric: Metric) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    /// `experiment,index,metric,mean,sd,replicates,failed`, floats in
    /// round-trip scientific notation and an empty cell for a missing sd.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Format(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["experiment", "index", "metric", "mean", "sd", "replicates", "failed"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.index.to_string(),
                r.metric.as_str().to_string(),
                format!("{:.16e}", r.mean),
                r.sd.map(|s| format!("{s:.16e}")).unwrap_or_default(),
                r.replicates.to_string(),
                r.failed.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Mean and sample standard deviation.
pub(crate) fn summarize(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd =
        (values.len() > 1).then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

pub(crate) fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("study configuration serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
