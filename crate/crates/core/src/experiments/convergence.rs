use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{digest, network_rmse, summarize, ExperimentReport, Metric, ReportMetadata, ReportRow};
use crate::error::{Error, Result};
use crate::estimator::fit_network;
use crate::model::NodeConfig;
use crate::simulation::{derive_seed, simulate_series, Noise, PaperDesign};

/// Data-generating design and estimator settings of a convergence run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDesign {
    pub design: PaperDesign,
    pub noise: Noise,
    pub sparsity: usize,
    pub step_size: f64,
    pub max_iters: usize,
}

impl Default for ConvergenceDesign {
    fn default() -> Self {
        Self {
            design: PaperDesign::Sim9,
            noise: Noise::Gaussian { sigma: 0.05 },
            sparsity: 4,
            step_size: 0.1,
            max_iters: 2000,
        }
    }
}

/// Least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LineFit {
    /// `None` with fewer than two distinct abscissae or a constant response.
    pub fn fit(x: &[f64], y: &[f64]) -> Option<Self> {
        let n = x.len() as f64;
        if x.len() < 2 {
            return None;
        }
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
        let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        if sxx == 0.0 || syy == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        Some(Self {
            slope,
            intercept: my - slope * mx,
            r_squared: sxy * sxy / (sxx * syy),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    pub t_inv_cbrt: f64,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOutcome {
    pub report: ExperimentReport,
    /// Plot-ready `(T^{-1/3}, mean error)` pairs.
    pub curve: Vec<CurvePoint>,
    /// `log(mean error)` against `log T`.
    pub log_log: Option<LineFit>,
    /// Mean error against `T^{-1/3}`.
    pub inverse_cube_root: Option<LineFit>,
}

/// Network estimation error across series lengths.
///
/// Replicate `r` fixes one network and one simulated path (long enough for the
/// largest length) and fits every prefix in `t_grid`, so the curve compares
/// lengths on common random numbers.
pub fn convergence_study(
    design: &ConvergenceDesign,
    t_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<ConvergenceOutcome> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("T grid must be non-empty and strictly ascending".into()));
    }
    if t_grid[0] < 2 {
        return Err(Error::Config("series lengths must be at least 2".into()));
    }
    let m = design.design.nodes();
    let cfg = NodeConfig::new(design.sparsity, design.step_size, design.max_iters);
    cfg.validate(m)?;
    let started = Instant::now();
    let t_max = *t_grid.last().expect("non-empty grid");

    // errors[r][i]: replicate r at t_grid[i]
    let errors: Vec<Vec<Option<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep = derive_seed(seed, r as u64);
            let Ok(truth) = design.design.ground_truth(design.noise, derive_seed(rep, 0)) else {
                return vec![None; t_grid.len()];
            };
            let Ok((full, _)) = simulate_series(&truth, t_max, derive_seed(rep, 1)) else {
                return vec![None; t_grid.len()];
            };
            let cfgs = vec![cfg.clone(); m];
            t_grid
                .iter()
                .map(|&t| {
                    let x = full.slice_rows(0..t + 1).ok()?;
                    let model = fit_network(&x, &cfgs, derive_seed(rep, 2)).ok()?;
                    network_rmse(model.network().view(), truth.a_star.view()).ok()
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut curve = Vec::new();
    let mut failed_total = 0;
    for (i, &t) in t_grid.iter().enumerate() {
        let ok: Vec<f64> = errors.iter().filter_map(|e| e[i]).collect();
        let failed = replicates - ok.len();
        failed_total += failed;
        if ok.is_empty() {
            continue;
        }
        let (mean, sd) = summarize(&ok);
        rows.push(ReportRow {
            experiment: "convergence".into(),
            index: t,
            metric: Metric::NetworkRmse,
            mean,
            sd,
            replicates: ok.len(),
            failed,
        });
        curve.push(CurvePoint {
            t,
            t_inv_cbrt: (t as f64).powf(-1.0 / 3.0),
            mean_error: mean,
        });
    }

    let log_t: Vec<f64> = curve.iter().map(|p| (p.t as f64).ln()).collect();
    let log_e: Vec<f64> = curve.iter().map(|p| p.mean_error.ln()).collect();
    let inv: Vec<f64> = curve.iter().map(|p| p.t_inv_cbrt).collect();
    let err: Vec<f64> = curve.iter().map(|p| p.mean_error).collect();

    Ok(ConvergenceOutcome {
        report: ExperimentReport {
            rows,
            metadata: ReportMetadata {
                seed,
                config_digest: digest(&(design, t_grid, replicates, seed)),
                wall_time_secs: started.elapsed().as_secs_f64(),
                failed_replicates: failed_total,
            },
        },
        log_log: LineFit::fit(&log_t, &log_e),
        inverse_cube_root: LineFit::fit(&inv, &err),
        curve,
    })
}
