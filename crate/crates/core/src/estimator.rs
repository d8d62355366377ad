//! Alternating projected gradient descent with isotonic regression.
//!
//! For each node `j` the estimator alternates between
//!
//! 1. fitting the monotone link by isotonic regression of `X_{t+1,j}` on the
//!    current linear predictors `<X_t, u>`, and
//! 2. a pseudo-gradient step on `u`, projected onto the tangent space of the
//!    sphere, followed by hard thresholding and renormalization.
//!
//! Nodes are independent, so [`fit_network`] fits them in parallel.

use ndarray::Array2;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::baselines::{lagged_design, lasso_cv, LassoCvOptions};
use crate::error::{Error, Result};
use crate::math::isotonic::iso_fit;
use crate::math::linalg::{dot, mean, norm2};
use crate::math::sparse::{orth_project, sparse_normalize};
use crate::model::{
    DataStats, DirectionVector, FittedModel, Init, MonotoneStepFunction, NodeConfig, NodeDiagnostics, Sparsity,
    TimeSeriesMatrix, SCHEMA_VERSION,
};
use crate::simulation::derive_seed;

/// Snapshot of one iteration: current direction and the isotonic fit it induces.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub u_current: DirectionVector,
    /// `iso_wrt(X_lag u_current, target)`, in time order.
    pub iso_fit: Vec<f64>,
    pub k: usize,
}

/// One node's regression problem over a window of the series.
struct NodeProblem<'a> {
    lag: Vec<&'a [f64]>,
    target: Vec<f64>,
}

struct IsoEval {
    predictors: Vec<f64>,
    fitted: Vec<f64>,
    order: Vec<usize>,
    mse: f64,
}

impl<'a> NodeProblem<'a> {
    fn new(x: &'a TimeSeriesMatrix, j: usize, transitions: std::ops::Range<usize>) -> Self {
        let lag: Vec<&[f64]> = transitions.clone().map(|t| x.row(t)).collect();
        let target = transitions.map(|t| x.row(t + 1)[j]).collect();
        Self { lag, target }
    }

    fn len(&self) -> usize {
        self.target.len()
    }

    /// Linear predictors `<X_t, u>` summed over the support of `u` only. Skipped
    /// terms are exact zeros, so this agrees bit-for-bit with a dense [`dot`].
    fn predictors(&self, u: &[f64]) -> Vec<f64> {
        let support: Vec<usize> = (0..u.len()).filter(|&i| u[i] != 0.0).collect();
        self.lag
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                for &i in &support {
                    acc += row[i] * u[i];
                }
                acc
            })
            .collect()
    }

    fn iso(&self, u: &[f64]) -> Result<IsoEval> {
        let predictors = self.predictors(u);
        let fit = iso_fit(&predictors, &self.target)?;
        let mse = self
            .target
            .iter()
            .zip(&fit.fitted)
            .map(|(y, f)| (y - f).powi(2))
            .sum::<f64>()
            / self.len() as f64;
        Ok(IsoEval {
            predictors,
            fitted: fit.fitted,
            order: fit.ordering.permutation,
            mse,
        })
    }

    /// `(1/T) X_lag^T v`.
    fn correlate(&self, v: &[f64]) -> Vec<f64> {
        let m = self.lag[0].len();
        let mut g = vec![0.0; m];
        for (row, r) in self.lag.iter().zip(v) {
            if *r == 0.0 {
                continue;
            }
            for (gi, xi) in g.iter_mut().zip(*row) {
                *gi += r * xi;
            }
        }
        let t = self.len() as f64;
        g.iter_mut().for_each(|gi| *gi /= t);
        g
    }

    fn init_moment(&self, s: usize) -> Result<Vec<f64>> {
        let first = self.target[0];
        if self.target.iter().all(|y| *y == first) {
            return Err(Error::DegenerateDirection);
        }
        let ybar = mean(&self.target);
        let centred: Vec<f64> = self.target.iter().map(|y| y - ybar).collect();
        sparse_normalize(&self.correlate(&centred), s)
    }

    /// Pseudo-gradient step from `u_prev` given its isotonic fit.
    fn step(&self, u_prev: &[f64], fit: &[f64], eta: f64, s: usize) -> StepOutcome {
        let residual: Vec<f64> = self.target.iter().zip(fit).map(|(y, f)| y - f).collect();
        let grad = self.correlate(&residual);
        let tangent = orth_project(u_prev, &grad).expect("unit-norm iterate");
        let moved: Vec<f64> = u_prev.iter().zip(&tangent).map(|(u, g)| u + eta * g).collect();
        match sparse_normalize(&moved, s) {
            Ok(next) => {
                let kept = crate::math::sparse::hard_threshold(&moved, s).expect("valid sparsity");
                StepOutcome {
                    next,
                    pre_norm: norm2(&kept),
                    degenerate: false,
                }
            }
            Err(_) => StepOutcome {
                next: u_prev.to_vec(),
                pre_norm: 0.0,
                degenerate: true,
            },
        }
    }
}

struct StepOutcome {
    next: Vec<f64>,
    pre_norm: f64,
    degenerate: bool,
}

fn check_node(x: &TimeSeriesMatrix, j: usize, s: usize) -> Result<()> {
    if j >= x.nodes() {
        return Err(Error::Domain(format!("node {j} out of range 0..{}", x.nodes())));
    }
    if s == 0 || s > x.nodes() {
        return Err(Error::Config(format!("sparsity {s} outside 1..={}", x.nodes())));
    }
    Ok(())
}

/// Moment initializer: the cross-covariance `(1/T) X_lag^T (y - mean(y))`,
/// hard-thresholded to `s` entries and normalized.
pub fn paper_init(x: &TimeSeriesMatrix, j: usize, s: usize) -> Result<DirectionVector> {
    check_node(x, j, s)?;
    let problem = NodeProblem::new(x, j, 0..x.transitions());
    let u = problem.init_moment(s).map_err(|_| Error::InitDegenerate { node: j })?;
    DirectionVector::new(u, s)
}

/// One alternating step from `u_prev`: isotonic fit, tangent pseudo-gradient
/// step of size `eta`, hard threshold to `s`, renormalize. A step that
/// thresholds to zero keeps `u_prev`.
pub fn pgd_step(
    x: &TimeSeriesMatrix,
    j: usize,
    u_prev: &DirectionVector,
    eta: f64,
    s: usize,
) -> Result<DirectionVector> {
    check_node(x, j, s)?;
    let problem = NodeProblem::new(x, j, 0..x.transitions());
    let fit = problem.iso(u_prev.coeffs())?;
    let out = problem.step(u_prev.coeffs(), &fit.fitted, eta, s);
    if out.degenerate {
        return Ok(u_prev.clone());
    }
    DirectionVector::new(out.next, s)
}

/// Current iterate and its isotonic fit on the full series.
pub fn iteration_state(x: &TimeSeriesMatrix, j: usize, u: &DirectionVector, k: usize) -> Result<IterationState> {
    let problem = NodeProblem::new(x, j, 0..x.transitions());
    let fit = problem.iso(u.coeffs())?;
    Ok(IterationState {
        u_current: u.clone(),
        iso_fit: fit.fitted,
        k,
    })
}

/// Result of fitting a single node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    pub direction: DirectionVector,
    pub step_function: MonotoneStepFunction,
    pub diagnostics: NodeDiagnostics,
}

fn lasso_options(seed: u64) -> LassoCvOptions {
    LassoCvOptions {
        seed,
        ..LassoCvOptions::default()
    }
}

/// Link for node `j` fitted by isotonic regression along a fixed direction.
pub fn fit_link(x: &TimeSeriesMatrix, j: usize, u: &DirectionVector) -> Result<MonotoneStepFunction> {
    if u.len() != x.nodes() {
        return Err(Error::Shape(format!(
            "direction has {} entries, series has {} nodes",
            u.len(),
            x.nodes()
        )));
    }
    check_node(x, j, u.sparsity())?;
    let eval = NodeProblem::new(x, j, 0..x.transitions()).iso(u.coeffs())?;
    MonotoneStepFunction::from_sorted_fit(&eval.predictors, &eval.fitted, &eval.order)
}

/// Cross-validated LASSO coefficients of node `j` on the lagged design.
fn lasso_coeffs(x: &TimeSeriesMatrix, j: usize, seed: u64) -> Result<Vec<f64>> {
    let design = lagged_design(x);
    let path = lasso_cv(design.view(), &x.target(j), &lasso_options(seed))?;
    Ok(path.selected_fit().coeffs)
}

/// Sparsity level as the support size of the cross-validated LASSO, at least 1.
pub fn lasso_sparsity(x: &TimeSeriesMatrix, j: usize, seed: u64) -> Result<usize> {
    let beta = lasso_coeffs(x, j, seed)?;
    Ok(beta.iter().filter(|b| **b != 0.0).count().max(1))
}

/// Fits direction and link for node `j` on the whole of `x`.
///
/// With early stopping, the final `validation_fraction` of transitions is held
/// out: iterations run on the leading part, the iterate with the lowest
/// holdout one-step MSE is kept, and its link is refit on all of `x`.
pub fn fit_node(x: &TimeSeriesMatrix, j: usize, cfg: &NodeConfig, seed: u64) -> Result<NodeFit> {
    cfg.validate(x.nodes())?;
    if j >= x.nodes() {
        return Err(Error::Domain(format!("node {j} out of range 0..{}", x.nodes())));
    }
    let t_total = x.transitions();
    let n_valid = match cfg.early_stop {
        Some(es) => {
            let n = ((es.validation_fraction * t_total as f64).round() as usize).max(1);
            if t_total < n + 2 {
                return Err(Error::Size(format!("{t_total} transitions too few to hold out {n}")));
            }
            n
        }
        None => 0,
    };
    let t_fit = t_total - n_valid;
    let fit_window = x.slice_rows(0..t_fit + 1)?;
    let train = NodeProblem::new(x, j, 0..t_fit);
    let holdout = NodeProblem::new(x, j, t_fit..t_total);

    let lasso_beta = match (&cfg.sparsity, &cfg.init) {
        (Sparsity::LassoCv, _) | (_, Init::LassoWarmStart) => {
            Some(lasso_coeffs(&fit_window, j, seed).map_err(|_| Error::InitDegenerate { node: j })?)
        }
        _ => None,
    };
    let s = match cfg.sparsity {
        Sparsity::Fixed(s) => s,
        Sparsity::LassoCv => lasso_beta
            .as_ref()
            .map_or(1, |b| b.iter().filter(|v| **v != 0.0).count().max(1)),
    };

    let degenerate = |_| Error::InitDegenerate { node: j };
    let mut u: Vec<f64> = match &cfg.init {
        Init::Paper => train.init_moment(s).map_err(degenerate)?,
        Init::LassoWarmStart => {
            let beta = lasso_beta.as_ref().expect("computed above");
            if beta.iter().all(|b| *b == 0.0) {
                train.init_moment(s).map_err(degenerate)?
            } else {
                sparse_normalize(beta, s).map_err(degenerate)?
            }
        }
        Init::Given(d) => sparse_normalize(d.coeffs(), s).map_err(degenerate)?,
    };

    let mut mse_history = Vec::with_capacity(cfg.max_iters + 1);
    let mut norm_history = Vec::with_capacity(cfg.max_iters);
    let mut valid_history = Vec::new();
    let mut degenerate_steps = Vec::new();
    let mut iterates = cfg.record_iterates.then(Vec::new);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut iterations_run = 0;

    for k in 0..=cfg.max_iters {
        let eval = train.iso(&u)?;
        mse_history.push(eval.mse);
        if let Some(its) = iterates.as_mut() {
            its.push(u.clone());
        }
        if n_valid > 0 {
            let f = MonotoneStepFunction::from_sorted_fit(&eval.predictors, &eval.fitted, &eval.order)?;
            let v_mse = holdout
                .lag
                .iter()
                .zip(&holdout.target)
                .map(|(row, y)| (y - f.eval(dot(row, &u))).powi(2))
                .sum::<f64>()
                / holdout.len() as f64;
            valid_history.push(v_mse);
            match &best {
                Some((b, _, _)) if v_mse >= *b => since_best += 1,
                _ => {
                    best = Some((v_mse, k, u.clone()));
                    since_best = 0;
                }
            }
            if since_best >= cfg.early_stop.expect("holdout implies early stop").patience {
                break;
            }
        }
        if k == cfg.max_iters {
            break;
        }
        let out = train.step(&u, &eval.fitted, cfg.step_size, s);
        norm_history.push(out.pre_norm);
        if out.degenerate {
            degenerate_steps.push(k + 1);
        }
        u = out.next;
        iterations_run = k + 1;
    }

    let (best_iteration, u_final) = match best {
        Some((_, k, v)) => (k, v),
        None => (iterations_run, u),
    };
    let full = NodeProblem::new(x, j, 0..t_total);
    let final_eval = full.iso(&u_final)?;
    let step_function =
        MonotoneStepFunction::from_sorted_fit(&final_eval.predictors, &final_eval.fitted, &final_eval.order)?;
    let direction = DirectionVector::new(u_final, s)?;

    Ok(NodeFit {
        direction,
        step_function,
        diagnostics: NodeDiagnostics {
            iterations_run,
            sparsity: s,
            final_train_mse: final_eval.mse,
            train_mse_history: mse_history,
            iterate_norm_history: norm_history,
            degenerate_steps,
            validation_mse_history: valid_history,
            best_iteration,
            iterates,
        },
    })
}

/// Hex SHA-256 of the canonical JSON of the per-node configuration and seed.
pub fn config_digest(cfgs: &[NodeConfig], seed: u64) -> String {
    let json = serde_json::to_string(&(cfgs, seed)).expect("configs serialize");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fits every node independently (in parallel) and assembles the model.
/// Node `j` receives seed `derive_seed(seed, j)`.
pub fn fit_network(x: &TimeSeriesMatrix, cfgs: &[NodeConfig], seed: u64) -> Result<FittedModel> {
    let m = x.nodes();
    if cfgs.len() != m {
        return Err(Error::Config(format!("{} node configs for {m} nodes", cfgs.len())));
    }
    for cfg in cfgs {
        cfg.validate(m)?;
    }
    let results: Vec<Result<NodeFit>> = (0..m)
        .into_par_iter()
        .map(|j| fit_node(x, j, &cfgs[j], derive_seed(seed, j as u64)))
        .collect();
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.is_err().then_some(j))
        .collect();
    if !failed.is_empty() {
        return Err(Error::Fit { nodes: failed });
    }
    let mut directions = Vec::with_capacity(m);
    let mut step_functions = Vec::with_capacity(m);
    let mut diagnostics = Vec::with_capacity(m);
    for r in results {
        let fit = r.expect("checked above");
        directions.push(fit.direction);
        step_functions.push(fit.step_function);
        diagnostics.push(fit.diagnostics);
    }
    Ok(FittedModel {
        schema_version: SCHEMA_VERSION,
        directions,
        step_functions,
        diagnostics,
        config: cfgs.to_vec(),
        data_stats: DataStats {
            max_abs: x.max_abs(),
            beta_hat: x.beta_hat(),
        },
        seed,
        config_digest: config_digest(cfgs, seed),
        manifest: Default::default(),
    })
}

/// `[f_j(<x_t, u_j>)]_j`.
pub fn predict_one_step(model: &FittedModel, x_t: &[f64]) -> Result<Vec<f64>> {
    if x_t.len() != model.nodes() {
        return Err(Error::Shape(format!(
            "input has {} entries, model has {} nodes",
            x_t.len(),
            model.nodes()
        )));
    }
    Ok(model
        .directions
        .iter()
        .zip(&model.step_functions)
        .map(|(u, f)| f.eval(dot(x_t, u.coeffs())))
        .collect())
}

/// Teacher-forced one-step-ahead predictions: row `t` of the result predicts
/// `x_test[t + 1]` from the observed `x_test[t]`.
pub fn rollout_predict(model: &FittedModel, x_test: &TimeSeriesMatrix) -> Result<Array2<f64>> {
    let m = model.nodes();
    if x_test.nodes() != m {
        return Err(Error::Shape(format!(
            "series has {} columns, model has {m} nodes",
            x_test.nodes()
        )));
    }
    let n = x_test.transitions();
    let mut out = Array2::zeros((n, m));
    for t in 0..n {
        let p = predict_one_step(model, x_test.row(t))?;
        for (j, v) in p.into_iter().enumerate() {
            out[(t, j)] = v;
        }
    }
    Ok(out)
}
