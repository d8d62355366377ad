//! Linear comparison methods: least-squares VAR(1) and the LASSO with
//! cross-validated penalty. The LASSO also supplies warm starts and sparsity
//! levels for the single-index estimator.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TimeSeriesMatrix;

const OLS_JITTER: f64 = 1e-10;

/// Least-squares VAR(1) fit with intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct VarFit {
    /// Entry `(i, j)`: effect of node `i` at time `t` on node `j` at `t + 1`.
    pub coefficients: Array2<f64>,
    pub intercepts: Vec<f64>,
    /// Set when the Gram matrix was numerically singular even after jitter.
    pub conditioning_warning: Option<String>,
}

impl VarFit {
    pub fn predict(&self, x_t: &[f64]) -> Vec<f64> {
        let m = self.intercepts.len();
        (0..m)
            .map(|j| {
                self.intercepts[j]
                    + x_t
                        .iter()
                        .zip(self.coefficients.column(j))
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Per-node least squares of `X_{t+1,j}` on `X_t` with intercept.
///
/// Solved through the centred normal equations with a `1e-10` diagonal jitter.
pub fn var_ols(x: &TimeSeriesMatrix) -> VarFit {
    let m = x.nodes();
    let t = x.transitions();
    let lag: Vec<&[f64]> = x.lagged_rows().collect();

    let mut xbar = vec![0.0; m];
    for row in &lag {
        for (a, v) in xbar.iter_mut().zip(*row) {
            *a += v;
        }
    }
    xbar.iter_mut().for_each(|a| *a /= t as f64);
    let targets: Vec<Vec<f64>> = (0..m).map(|j| x.target(j)).collect();
    let ybar: Vec<f64> = targets.iter().map(|y| y.iter().sum::<f64>() / t as f64).collect();

    let mut gram = vec![vec![0.0; m]; m];
    let mut rhs = vec![vec![0.0; m]; m]; // rhs[j][i] = <x_i - xbar_i, y_j - ybar_j>
    for (ti, row) in lag.iter().enumerate() {
        let c: Vec<f64> = row.iter().zip(&xbar).map(|(v, b)| v - b).collect();
        for a in 0..m {
            for b in a..m {
                gram[a][b] += c[a] * c[b];
            }
            for j in 0..m {
                rhs[j][a] += c[a] * (targets[j][ti] - ybar[j]);
            }
        }
    }
    for a in 0..m {
        gram[a][a] += OLS_JITTER;
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }

    let (chol, warning) = cholesky(&gram);
    let mut coefficients = Array2::zeros((m, m));
    let mut intercepts = vec![0.0; m];
    for j in 0..m {
        let b = chol_solve(&chol, &rhs[j]);
        intercepts[j] = ybar[j] - b.iter().zip(&xbar).map(|(b, x)| b * x).sum::<f64>();
        for i in 0..m {
            coefficients[(i, j)] = b[i];
        }
    }
    VarFit {
        coefficients,
        intercepts,
        conditioning_warning: warning,
    }
}

/// Lower-triangular Cholesky factor. Non-positive pivots are clamped to a tiny
/// value and reported.
fn cholesky(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, Option<String>) {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    let mut warning = None;
    let max_diag = (0..n).map(|i| a[i][i]).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        // the jitter alone carrying the pivot means the raw Gram is singular
        if d - OLS_JITTER <= 1e-12 * max_diag {
            warning = Some(format!("Gram matrix near-singular at pivot {j} ({d:.3e})"));
            d = d.max(OLS_JITTER);
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    (l, warning)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// LASSO solution on the original scale of the design.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    /// `None` when converged; otherwise the final KKT violation.
    pub convergence_warning: Option<f64>,
}

impl LassoFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn support_size(&self) -> usize {
        self.coeffs.iter().filter(|c| **c != 0.0).count()
    }
}

pub const LASSO_TOL: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

/// Design standardized to mean zero and unit (population) variance per column,
/// stored column-major. Constant columns are flagged and never enter the model.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub columns: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub y_mean: f64,
    pub y_centred: Vec<f64>,
}

impl Standardized {
    pub fn new(x: ArrayView2<'_, f64>, y: &[f64]) -> Self {
        let n = x.nrows();
        let mut columns = Vec::with_capacity(x.ncols());
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 0.0 };
            let c = if scale > 0.0 {
                col.iter().map(|v| (v - mean) / scale).collect()
            } else {
                vec![0.0; n]
            };
            columns.push(c);
            means.push(mean);
            scales.push(scale);
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_centred = y.iter().map(|v| v - y_mean).collect();
        Self {
            columns,
            means,
            scales,
            y_mean,
            y_centred,
        }
    }

    fn n(&self) -> usize {
        self.y_centred.len()
    }

    /// Smallest penalty at which all coefficients vanish.
    pub fn lambda_max(&self) -> f64 {
        let n = self.n() as f64;
        self.columns
            .iter()
            .map(|c| (dot(c, &self.y_centred) / n).abs())
            .fold(0.0, f64::max)
    }

    fn to_original(&self, beta: &[f64], sweeps: usize, warning: Option<f64>) -> LassoFit {
        let coeffs: Vec<f64> = beta
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean - coeffs.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        LassoFit {
            coeffs,
            intercept,
            sweeps,
            convergence_warning: warning,
        }
    }

    /// Cyclic coordinate descent on the standardized problem, warm-started
    /// from `beta`. Returns sweeps used and the final KKT violation if the
    /// sweep budget ran out.
    pub fn solve(&self, lambda: f64, beta: &mut [f64]) -> (usize, Option<f64>) {
        let n = self.n() as f64;
        let mut r: Vec<f64> = self.y_centred.clone();
        for (c, b) in self.columns.iter().zip(beta.iter()) {
            if *b != 0.0 {
                axpy(-b, c, &mut r);
            }
        }
        #[cfg(debug_assertions)]
        let mut last_obj = self.objective(&r, beta, lambda);
        for sweep in 1..=LASSO_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for k in 0..self.columns.len() {
                if self.scales[k] == 0.0 {
                    beta[k] = 0.0;
                    continue;
                }
                let c = &self.columns[k];
                let old = beta[k];
                let rho = dot(c, &r) / n + old;
                let new = soft_threshold(rho, lambda);
                if new != old {
                    axpy(old - new, c, &mut r);
                    beta[k] = new;
                    max_change = max_change.max((new - old).abs());
                }
            }
            #[cfg(debug_assertions)]
            {
                let obj = self.objective(&r, beta, lambda);
                debug_assert!(obj <= last_obj + 1e-12 * last_obj.abs().max(1.0));
                last_obj = obj;
            }
            if max_change <= LASSO_TOL && self.kkt_violation(&r, beta, lambda) <= LASSO_TOL {
                return (sweep, None);
            }
        }
        (LASSO_MAX_SWEEPS, Some(self.kkt_violation(&r, beta, lambda)))
    }

    #[cfg(debug_assertions)]
    fn objective(&self, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
        dot(r, r) / (2.0 * self.n() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn kkt_violation(&self, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
        let n = self.n() as f64;
        let mut worst: f64 = 0.0;
        for (k, c) in self.columns.iter().enumerate() {
            if self.scales[k] == 0.0 {
                continue;
            }
            let g = dot(c, r) / n;
            let v = if beta[k] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * beta[k].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    fn fit(&self, lambda: f64, beta: &mut [f64]) -> LassoFit {
        let (sweeps, warning) = self.solve(lambda, beta);
        self.to_original(beta, sweeps, warning)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)||y - b0 - X b||^2 + lambda ||b||_1` with columns of `X`
/// standardized internally. Coefficients come back on the original scale and
/// the intercept is unpenalized.
pub fn lasso_cd(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Result<LassoFit> {
    check_design(x, y)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let st = Standardized::new(x, y);
    let mut beta = vec![0.0; x.ncols()];
    Ok(st.fit(lambda, &mut beta))
}

fn check_design(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "design has {} rows, response {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 || x.ncols() == 0 {
        return Err(Error::Size("design too small".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in design or response".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Contiguous blocks of rows, preserving temporal adjacency.
    Blocked,
    /// Rows shuffled with the supplied seed before cutting into folds.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoCvOptions {
    pub n_lambdas: usize,
    pub n_folds: usize,
    /// Smallest grid value as a fraction of the null-model penalty.
    pub min_ratio: f64,
    pub scheme: FoldScheme,
    pub seed: u64,
}

impl Default for LassoCvOptions {
    fn default() -> Self {
        Self {
            n_lambdas: 50,
            n_folds: 5,
            min_ratio: 1e-3,
            scheme: FoldScheme::Blocked,
            seed: 0,
        }
    }
}

/// Regularization path with cross-validation errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    /// Strictly decreasing.
    pub lambdas: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_sd: Vec<f64>,
    pub selected: usize,
}

impl LassoPath {
    pub fn selected_lambda(&self) -> f64 {
        self.lambdas[self.selected]
    }

    pub fn selected_fit(&self) -> LassoFit {
        LassoFit {
            coeffs: self.coeffs[self.selected].clone(),
            intercept: self.intercepts[self.selected],
            sweeps: 0,
            convergence_warning: None,
        }
    }
}

fn lambda_grid(lambda_max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    let step = min_ratio.ln() / (n - 1) as f64;
    (0..n).map(|i| lambda_max * (step * i as f64).exp()).collect()
}

/// Cross-validated LASSO over a geometric penalty grid from the null-model
/// penalty down to `min_ratio` times it. Selects the penalty with the smallest
/// mean validation MSE (the larger penalty on ties).
pub fn lasso_cv(x: ArrayView2<'_, f64>, y: &[f64], opts: &LassoCvOptions) -> Result<LassoPath> {
    check_design(x, y)?;
    let n = x.nrows();
    if opts.n_folds < 2 {
        return Err(Error::Fold(format!("need at least 2 folds, got {}", opts.n_folds)));
    }
    if opts.n_lambdas == 0 || !(opts.min_ratio > 0.0 && opts.min_ratio < 1.0) {
        return Err(Error::Domain("invalid lambda grid".into()));
    }
    let fold_len = n / opts.n_folds;
    if fold_len < 5 {
        return Err(Error::Fold(format!(
            "{n} rows split into {} folds leaves fewer than 5 rows per fold",
            opts.n_folds
        )));
    }

    let full = Standardized::new(x, y);
    let lambda_max = full.lambda_max();
    let p = x.ncols();
    if lambda_max <= 0.0 {
        // response is constant or the design carries no variation
        let fit = full.to_original(&vec![0.0; p], 0, None);
        return Ok(LassoPath {
            lambdas: vec![1.0],
            coeffs: vec![fit.coeffs],
            intercepts: vec![fit.intercept],
            cv_mean: vec![0.0],
            cv_sd: vec![0.0],
            selected: 0,
        });
    }
    let lambdas = lambda_grid(lambda_max, opts.n_lambdas, opts.min_ratio);

    let mut rows: Vec<usize> = (0..n).collect();
    if opts.scheme == FoldScheme::Shuffled {
        rows.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(opts.seed));
    }
    let fold_of = |pos: usize| (pos / fold_len).min(opts.n_folds - 1);

    let fold_errors: Vec<Vec<f64>> = (0..opts.n_folds)
        .into_par_iter()
        .map(|fold| {
            let (mut train, mut valid) = (Vec::new(), Vec::new());
            for (pos, &r) in rows.iter().enumerate() {
                if fold_of(pos) == fold {
                    valid.push(r);
                } else {
                    train.push(r);
                }
            }
            let xt = x.select(ndarray::Axis(0), &train);
            let yt: Vec<f64> = train.iter().map(|&r| y[r]).collect();
            let st = Standardized::new(xt.view(), &yt);
            let mut beta = vec![0.0; p];
            lambdas
                .iter()
                .map(|&lam| {
                    let fit = st.fit(lam, &mut beta);
                    valid
                        .iter()
                        .map(|&r| {
                            let row = x.row(r);
                            let pred = fit.intercept + row.iter().zip(&fit.coeffs).map(|(a, b)| a * b).sum::<f64>();
                            (y[r] - pred).powi(2)
                        })
                        .sum::<f64>()
                        / valid.len() as f64
                })
                .collect()
        })
        .collect();

    let k = opts.n_folds as f64;
    let mut cv_mean = vec![0.0; lambdas.len()];
    let mut cv_sd = vec![0.0; lambdas.len()];
    for l in 0..lambdas.len() {
        let m = fold_errors.iter().map(|e| e[l]).sum::<f64>() / k;
        let var = fold_errors.iter().map(|e| (e[l] - m).powi(2)).sum::<f64>() / (k - 1.0);
        cv_mean[l] = m;
        cv_sd[l] = var.sqrt();
    }
    let mut selected = 0;
    for l in 1..lambdas.len() {
        if cv_mean[l] < cv_mean[selected] {
            selected = l;
        }
    }

    let mut beta = vec![0.0; p];
    let mut coeffs = Vec::with_capacity(lambdas.len());
    let mut intercepts = Vec::with_capacity(lambdas.len());
    for &lam in &lambdas {
        let fit = full.fit(lam, &mut beta);
        coeffs.push(fit.coeffs);
        intercepts.push(fit.intercept);
    }
    Ok(LassoPath {
        lambdas,
        coeffs,
        intercepts,
        cv_mean,
        cv_sd,
        selected,
    })
}

/// Design `X_{0..T-1}` and response `X_{1..T, j}` as an owned matrix pair.
pub fn lagged_design(x: &TimeSeriesMatrix) -> Array2<f64> {
    let m = x.nodes();
    let flat: Vec<f64> = x.lagged_rows().flatten().copied().collect();
    Array2::from_shape_vec((x.transitions(), m), flat).expect("consistent shape")
}

/// Cross-validated LASSO for every node of a VAR(1) design.
pub fn lasso_var(x: &TimeSeriesMatrix, opts: &LassoCvOptions) -> Result<Vec<LassoPath>> {
    let design = lagged_design(x);
    (0..x.nodes())
        .into_par_iter()
        .map(|j| lasso_cv(design.view(), &x.target(j), opts))
        .collect()
}
