use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{digest, mean_squared_error, summarize, ExperimentReport, Metric, ReportMetadata, ReportRow};
use crate::baselines::{lasso_var, LassoCvOptions};
use crate::error::{Error, Result};
use crate::estimator::{fit_link, fit_network};
use crate::model::{DirectionVector, Init, NodeConfig, TimeSeriesMatrix};
use crate::simulation::{derive_seed, simulate_series, Noise, PaperDesign};

/// One-step prediction comparison between the warm-started estimator and a
/// cross-validated LASSO autoregression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionDesign {
    pub design: PaperDesign,
    pub noise: Noise,
    /// Transitions simulated in total (the series has one more row).
    pub transitions: usize,
    /// Leading share of transitions used for training.
    pub train_fraction: f64,
    pub sparsity: usize,
    pub step_size: f64,
    pub max_iters: usize,
}

impl PredictionDesign {
    pub fn nine(noise: Noise) -> Self {
        Self {
            design: PaperDesign::Predict9,
            noise,
            transitions: 1000,
            train_fraction: 0.9,
            sparsity: 4,
            step_size: 0.01,
            max_iters: 300,
        }
    }

    pub fn thirty_six(noise: Noise) -> Self {
        Self {
            design: PaperDesign::Sim36,
            sparsity: 8,
            ..Self::nine(noise)
        }
    }

    fn train_transitions(&self) -> usize {
        (self.train_fraction * self.transitions as f64).round() as usize
    }

    fn experiment_id(&self) -> &'static str {
        match self.design {
            PaperDesign::Sim36 => "predict36",
            _ => "predict9",
        }
    }
}

/// Per-replicate traces; SIMAM entries are indexed by iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReplicate {
    pub simam_train: Vec<f64>,
    pub simam_test: Vec<f64>,
    pub lasso_train: f64,
    pub lasso_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub report: ExperimentReport,
    /// `None` where the replicate failed.
    pub replicates: Vec<Option<PredictionReplicate>>,
}

impl PredictionOutcome {
    /// Share of successful replicates whose final SIMAM test MSE is strictly
    /// below the LASSO test MSE.
    pub fn simam_win_rate(&self) -> f64 {
        let ok: Vec<&PredictionReplicate> = self.replicates.iter().flatten().collect();
        if ok.is_empty() {
            return 0.0;
        }
        let wins = ok
            .iter()
            .filter(|r| r.simam_test.last().is_some_and(|s| *s < r.lasso_test))
            .count();
        wins as f64 / ok.len() as f64
    }
}

fn lasso_mse(paths: &[crate::baselines::LassoPath], x: &TimeSeriesMatrix) -> Result<f64> {
    let m = x.nodes();
    let fits: Vec<_> = paths.iter().map(|p| p.selected_fit()).collect();
    let n = x.transitions();
    let pred = Array2::from_shape_fn((n, m), |(t, j)| fits[j].predict(x.row(t)));
    let actual = Array2::from_shape_fn((n, m), |(t, j)| x.row(t + 1)[j]);
    mean_squared_error(pred.view(), actual.view())
}

fn run_replicate(design: &PredictionDesign, rep: u64) -> Result<PredictionReplicate> {
    let m = design.design.nodes();
    let truth = design.design.ground_truth(design.noise, derive_seed(rep, 0))?;
    let (x, _) = simulate_series(&truth, design.transitions, derive_seed(rep, 1))?;
    let n_train = design.train_transitions();
    let train = x.slice_rows(0..n_train + 1)?;
    let test = x.slice_rows(n_train..design.transitions + 1)?;

    let opts = LassoCvOptions {
        seed: derive_seed(rep, 2),
        ..LassoCvOptions::default()
    };
    let paths = lasso_var(&train, &opts)?;
    let lasso_train = lasso_mse(&paths, &train)?;
    let lasso_test = lasso_mse(&paths, &test)?;

    let mut cfg = NodeConfig::new(design.sparsity, design.step_size, design.max_iters).with_init(Init::LassoWarmStart);
    cfg.record_iterates = true;
    let model = fit_network(&train, &vec![cfg; m], derive_seed(rep, 2))?;

    let iters = design.max_iters + 1;
    let mut simam_train = vec![0.0; iters];
    let mut simam_test = vec![0.0; iters];
    let n_test = test.transitions() as f64;
    for j in 0..m {
        let diag = &model.diagnostics[j];
        let iterates = diag.iterates.as_ref().expect("iterates recorded");
        for k in 0..iters {
            simam_train[k] += diag.train_mse_history[k] / m as f64;
            let u = DirectionVector::new(iterates[k].clone(), diag.sparsity)?;
            let link = fit_link(&train, j, &u)?;
            let sq: f64 = (0..test.transitions())
                .map(|t| {
                    let z: f64 = test.row(t).iter().zip(u.coeffs()).map(|(a, b)| a * b).sum();
                    (link.eval(z) - test.row(t + 1)[j]).powi(2)
                })
                .sum();
            simam_test[k] += sq / n_test / m as f64;
        }
    }
    Ok(PredictionReplicate {
        simam_train,
        simam_test,
        lasso_train,
        lasso_test,
    })
}

/// In- and out-of-sample one-step MSE per iteration, averaged over nodes and
/// then over replicates.
pub fn prediction_study(design: &PredictionDesign, replicates: usize, seed: u64) -> Result<PredictionOutcome> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if !(design.train_fraction > 0.0 && design.train_fraction < 1.0) {
        return Err(Error::Config("train fraction must lie in (0, 1)".into()));
    }
    let n_train = design.train_transitions();
    if n_train < 2 || n_train >= design.transitions {
        return Err(Error::Config(format!(
            "{n_train} training transitions out of {}",
            design.transitions
        )));
    }
    NodeConfig::new(design.sparsity, design.step_size, design.max_iters).validate(design.design.nodes())?;
    let started = Instant::now();

    let results: Vec<Option<PredictionReplicate>> = (0..replicates)
        .into_par_iter()
        .map(|r| run_replicate(design, derive_seed(seed, r as u64)).ok())
        .collect();
    let ok: Vec<&PredictionReplicate> = results.iter().flatten().collect();
    let failed = replicates - ok.len();
    let id = design.experiment_id();

    let mut rows = Vec::new();
    let mut push = |index: usize, metric: Metric, values: Vec<f64>| {
        let (mean, sd) = summarize(&values);
        rows.push(ReportRow {
            experiment: id.into(),
            index,
            metric,
            mean,
            sd,
            replicates: values.len(),
            failed,
        });
    };
    if !ok.is_empty() {
        push(0, Metric::LassoTrainMse, ok.iter().map(|r| r.lasso_train).collect());
        push(0, Metric::LassoTestMse, ok.iter().map(|r| r.lasso_test).collect());
        for k in 0..=design.max_iters {
            push(k, Metric::SimamTrainMse, ok.iter().map(|r| r.simam_train[k]).collect());
            push(k, Metric::SimamTestMse, ok.iter().map(|r| r.simam_test[k]).collect());
        }
    }

    Ok(PredictionOutcome {
        report: ExperimentReport {
            rows,
            metadata: ReportMetadata {
                seed,
                config_digest: digest(&(design, replicates, seed)),
                wall_time_secs: started.elapsed().as_secs_f64(),
                failed_replicates: failed,
            },
        },
        replicates: results,
    })
}
