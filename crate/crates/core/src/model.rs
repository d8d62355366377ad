//! Shared data model: observations, directions, fitted link functions, configuration.

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Observation matrix with rows `0..=T` (time) and `M` columns (nodes).
///
/// Stored row-major so each time point is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    data: Array2<f64>,
}

/// Checks finiteness and size of a raw observation matrix.
pub fn validate_series(raw: Array2<f64>) -> Result<TimeSeriesMatrix> {
    for ((row, col), v) in raw.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::Ingest { row, col });
        }
    }
    if raw.nrows() < 3 {
        return Err(Error::Size(format!(
            "need at least 3 time points (T >= 2), got {}",
            raw.nrows()
        )));
    }
    if raw.ncols() == 0 {
        return Err(Error::Size("series has no columns".into()));
    }
    Ok(TimeSeriesMatrix {
        data: raw.as_standard_layout().into_owned(),
    })
}

impl TimeSeriesMatrix {
    /// Builds a matrix that may have as few as two rows (one transition), as
    /// needed for short prediction windows.
    pub fn window(raw: Array2<f64>) -> Result<Self> {
        for ((row, col), v) in raw.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::Ingest { row, col });
            }
        }
        if raw.nrows() < 2 || raw.ncols() == 0 {
            return Err(Error::Size(format!(
                "window needs at least 2 rows and 1 column, got {}x{}",
                raw.nrows(),
                raw.ncols()
            )));
        }
        Ok(Self {
            data: raw.as_standard_layout().into_owned(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let raw = Array2::from_shape_vec((rows.len(), m), flat).map_err(|e| Error::Shape(e.to_string()))?;
        validate_series(raw)
    }

    /// Number of transitions `T` (rows minus one).
    pub fn transitions(&self) -> usize {
        self.data.nrows() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let m = self.nodes();
        &self.data.as_slice().expect("standard layout")[t * m..(t + 1) * m]
    }

    /// Predictor rows `0..T` (the matrix with its last row removed).
    pub fn lagged_rows(&self) -> impl Iterator<Item = &[f64]> {
        let m = self.nodes();
        self.data.as_slice().expect("standard layout")[..self.transitions() * m].chunks_exact(m)
    }

    /// Response column `j` over rows `1..=T`.
    pub fn target(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().skip(1).copied().collect()
    }

    /// Rows `1..=T`, the one-step-ahead targets of every node.
    pub fn targets(&self) -> ArrayView2<'_, f64> {
        self.data.slice(ndarray::s![1.., ..])
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Rows in `range` as a new window (at least two rows).
    pub fn slice_rows(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.n_rows() || range.start >= range.end {
            return Err(Error::Size(format!("row range {range:?} outside 0..{}", self.n_rows())));
        }
        Self::window(self.data.slice(ndarray::s![range, ..]).to_owned())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest eigenvalue of `X_lag^T X_lag / T`, by power iteration.
    pub fn beta_hat(&self) -> f64 {
        let t = self.transitions() as f64;
        let m = self.nodes();
        let mut z = vec![0.0; self.transitions()];
        crate::math::linalg::power_iteration(
            m,
            |x, y| {
                for (zt, row) in z.iter_mut().zip(self.lagged_rows()) {
                    *zt = crate::math::linalg::dot(row, x);
                }
                y.fill(0.0);
                for (zt, row) in z.iter().zip(self.lagged_rows()) {
                    for (yi, ri) in y.iter_mut().zip(row) {
                        *yi += zt * ri;
                    }
                }
                for yi in y.iter_mut() {
                    *yi /= t;
                }
            },
            1e-8,
            1000,
        )
    }
}

/// Unit-norm sparse direction (one column of the influence network).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionVector {
    coeffs: Vec<f64>,
    sparsity: usize,
}

impl DirectionVector {
    pub fn new(coeffs: Vec<f64>, sparsity: usize) -> Result<Self> {
        let d = Self { coeffs, sparsity };
        d.check()?;
        Ok(d)
    }

    fn check(&self) -> Result<()> {
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return domain("direction has non-finite coefficient");
        }
        let n = crate::math::linalg::norm2(&self.coeffs);
        if (n - 1.0).abs() > 1e-10 {
            return domain(format!("direction norm {n} is not 1"));
        }
        if self.nnz() > self.sparsity {
            return domain(format!(
                "direction has {} nonzeros but sparsity {}",
                self.nnz(),
                self.sparsity
            ));
        }
        Ok(())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.iter().filter(|c| **c != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.coeffs.len()).filter(|&i| self.coeffs[i] != 0.0).collect()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Non-decreasing, left-continuous, piecewise-constant function.
///
/// Jumps sit at the breakpoints: `f(x) = values[k]` where `k` counts the
/// breakpoints strictly below `x`, clamped to the last value. The function is
/// constant beyond both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotoneStepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl MonotoneStepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = Self { breakpoints, values };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        if self.breakpoints.len() != self.values.len() {
            return domain("breakpoints and values differ in length");
        }
        if self.breakpoints.is_empty() {
            return domain("empty step function");
        }
        if self.breakpoints.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return domain("non-finite entry in step function");
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return domain("breakpoints must be strictly increasing");
        }
        if self.values.windows(2).any(|w| w[0] > w[1]) {
            return domain("values must be non-decreasing");
        }
        Ok(())
    }

    /// Builds the function from paired predictors and fitted values, where
    /// `order` sorts the predictors ascending. Equal predictors collapse into
    /// one breakpoint; they already share a pooled fitted value.
    pub(crate) fn from_sorted_fit(predictors: &[f64], fitted: &[f64], order: &[usize]) -> Result<Self> {
        let mut breakpoints: Vec<f64> = Vec::with_capacity(order.len());
        let mut values: Vec<f64> = Vec::with_capacity(order.len());
        for &i in order {
            if breakpoints.last() == Some(&predictors[i]) {
                continue;
            }
            breakpoints.push(predictors[i]);
            values.push(fitted[i]);
        }
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b < x);
        self.values[k.min(self.values.len() - 1)]
    }
}

/// Evaluates a step function; the only failure is an empty function, which
/// the constructor already rules out.
pub fn eval_step_function(f: &MonotoneStepFunction, x: f64) -> Result<f64> {
    if f.values.is_empty() {
        return domain("empty step function");
    }
    Ok(f.eval(x))
}

/// How the per-node sparsity level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sparsity {
    Fixed(usize),
    /// Support size of the cross-validated LASSO fit, at least 1.
    LassoCv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// Hard-thresholded, normalized cross-covariance with the centred target.
    Paper,
    /// Hard-thresholded, normalized cross-validated LASSO coefficients.
    LassoWarmStart,
    Given(DirectionVector),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub validation_fraction: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub sparsity: Sparsity,
    pub step_size: f64,
    pub max_iters: usize,
    pub init: Init,
    pub early_stop: Option<EarlyStop>,
    /// Keep every iterate in the diagnostics.
    #[serde(default)]
    pub record_iterates: bool,
}

impl NodeConfig {
    pub fn new(sparsity: usize, step_size: f64, max_iters: usize) -> Self {
        Self {
            sparsity: Sparsity::Fixed(sparsity),
            step_size,
            max_iters,
            init: Init::Paper,
            early_stop: None,
            record_iterates: false,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_early_stop(mut self, early_stop: EarlyStop) -> Self {
        self.early_stop = Some(early_stop);
        self
    }

    /// Checks the invariants that can be verified once the node count is known.
    pub fn validate(&self, nodes: usize) -> Result<()> {
        if let Sparsity::Fixed(s) = self.sparsity {
            if s == 0 || s > nodes {
                return Err(Error::Config(format!("sparsity {s} outside 1..={nodes}")));
            }
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Config(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let Some(es) = &self.early_stop {
            if !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "validation fraction {} outside (0, 1)",
                    es.validation_fraction
                )));
            }
            if es.patience == 0 {
                return Err(Error::Config("patience must be at least 1".into()));
            }
        }
        if let Init::Given(d) = &self.init {
            if d.len() != nodes {
                return Err(Error::Config(format!(
                    "given initial direction has length {}, expected {nodes}",
                    d.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDiagnostics {
    pub iterations_run: usize,
    /// Resolved sparsity level actually used.
    pub sparsity: usize,
    /// `(1/T) ||target - iso fit||^2` for the returned direction.
    pub final_train_mse: f64,
    /// Training MSE at each iterate, index `k` for `u^(k)`.
    pub train_mse_history: Vec<f64>,
    /// Norm of the thresholded step before renormalization, per iteration.
    pub iterate_norm_history: Vec<f64>,
    /// Iterations where thresholding produced a zero vector and the previous iterate was kept.
    pub degenerate_steps: Vec<usize>,
    /// Holdout MSE per iterate when early stopping is enabled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation_mse_history: Vec<f64>,
    /// Iterate returned (differs from `iterations_run` under early stopping).
    pub best_iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataStats {
    /// Largest absolute observed entry.
    pub max_abs: f64,
    /// Largest eigenvalue of `X_lag^T X_lag / T`.
    pub beta_hat: f64,
}

pub const SCHEMA_VERSION: u32 = 1;

/// Estimated network, link functions and per-node diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedModel {
    pub schema_version: u32,
    /// Column `j` of the network: the direction for node `j`.
    pub directions: Vec<DirectionVector>,
    pub step_functions: Vec<MonotoneStepFunction>,
    pub diagnostics: Vec<NodeDiagnostics>,
    pub config: Vec<NodeConfig>,
    pub data_stats: DataStats,
    pub seed: u64,
    pub config_digest: String,
    /// Free-form provenance (e.g. command-line flags), kept sorted.
    #[serde(default)]
    pub manifest: BTreeMap<String, String>,
}

impl FittedModel {
    pub fn nodes(&self) -> usize {
        self.directions.len()
    }

    /// The `M x M` network whose column `j` is the direction of node `j`.
    pub fn network(&self) -> Array2<f64> {
        let m = self.nodes();
        Array2::from_shape_fn((m, m), |(i, j)| self.directions[j].coeffs()[i])
    }

    /// Re-checks every structural invariant, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let m = self.nodes();
        if m == 0 {
            return Err(Error::Format("model has no nodes".into()));
        }
        if self.step_functions.len() != m || self.diagnostics.len() != m || self.config.len() != m {
            return Err(Error::Format("per-node arrays differ in length".into()));
        }
        for d in &self.directions {
            if d.len() != m {
                return Err(Error::Format("direction length differs from node count".into()));
            }
            d.check()?;
        }
        for f in &self.step_functions {
            f.check()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn validate_series_cases() {
        assert!(validate_series(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).is_ok());
        let bad = array![[1.0, 2.0], [f64::NAN, 4.0], [5.0, 6.0]];
        assert_eq!(validate_series(bad), Err(Error::Ingest { row: 1, col: 0 }));
        let short = Array2::<f64>::zeros((2, 5));
        assert!(matches!(validate_series(short), Err(Error::Size(_))));
    }

    #[test]
    fn slicing() {
        let x = validate_series(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(x.transitions(), 2);
        let lag: Vec<&[f64]> = x.lagged_rows().collect();
        assert_eq!(lag, vec![&[1.0, 2.0][..], &[3.0, 4.0][..]]);
        assert_eq!(x.target(1), vec![4.0, 6.0]);
        assert_eq!(x.row(2), &[5.0, 6.0]);
        assert_eq!(x.max_abs(), 6.0);
    }

    #[test]
    fn beta_hat_matches_closed_form() {
        // lagged rows (1,0),(0,2): X^T X / 2 = diag(0.5, 2)
        let x = validate_series(array![[1.0, 0.0], [0.0, 2.0], [9.0, 9.0]]).unwrap();
        assert!((x.beta_hat() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn step_function_convention() {
        let f = MonotoneStepFunction::new(vec![0.0, 1.0], vec![2.0, 5.0]).unwrap();
        assert_eq!(f.eval(-10.0), 2.0);
        assert_eq!(f.eval(0.0), 2.0);
        assert_eq!(f.eval(0.5), 5.0);
        assert_eq!(f.eval(1.0), 5.0);
        assert_eq!(f.eval(10.0), 5.0);
        assert!(MonotoneStepFunction::new(vec![], vec![]).is_err());
        assert!(MonotoneStepFunction::new(vec![1.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(MonotoneStepFunction::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn duplicate_predictors_merge() {
        let z = [0.3, 0.1, 0.3, 0.2];
        let fit = [2.0, 1.0, 2.0, 1.5];
        let f = MonotoneStepFunction::from_sorted_fit(&z, &fit, &[1, 3, 0, 2]).unwrap();
        assert_eq!(f.breakpoints(), &[0.1, 0.2, 0.3]);
        assert_eq!(f.values(), &[1.0, 1.5, 2.0]);
    }

    #[test]
    fn direction_checks() {
        assert!(DirectionVector::new(vec![0.6, 0.8], 2).is_ok());
        assert!(DirectionVector::new(vec![0.6, 0.8], 1).is_err());
        assert!(DirectionVector::new(vec![1.0, 1.0], 2).is_err());
    }

    #[test]
    fn node_config_checks() {
        assert!(NodeConfig::new(2, 0.1, 10).validate(3).is_ok());
        assert!(NodeConfig::new(0, 0.1, 10).validate(3).is_err());
        assert!(NodeConfig::new(4, 0.1, 10).validate(3).is_err());
        assert!(NodeConfig::new(2, 0.0, 10).validate(3).is_err());
        assert!(NodeConfig::new(2, 0.1, 0).validate(3).is_err());
    }

    proptest! {
        #[test]
        fn step_function_is_monotone(
            steps in prop::collection::vec((0.01f64..2.0, 0.0f64..3.0), 1..20),
            queries in prop::collection::vec(-50.0f64..50.0, 2..50)
        ) {
            let mut b = Vec::new();
            let mut v = Vec::new();
            let (mut x, mut y) = (-10.0, -1.0);
            for (dx, dy) in steps {
                x += dx;
                y += dy;
                b.push(x);
                v.push(y);
            }
            let f = MonotoneStepFunction::new(b, v).unwrap();
            let mut q = queries;
            q.sort_by(f64::total_cmp);
            let vals: Vec<f64> = q.iter().map(|&x| f.eval(x)).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
