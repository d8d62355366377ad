//! Sparse influence networks from multivariate time series under a monotone
//! single-index autoregressive model.
//!
//! Each node's next value is an unknown non-decreasing function of a sparse
//! linear combination of the previous time point. The estimator alternates
//! isotonic regression (for the function) with hard-thresholded projected
//! gradient steps on the unit sphere (for the direction).

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod math;
pub mod model;
pub mod network;
pub mod simulation;

pub use error::{Error, Result};
pub use estimator::{fit_network, fit_node, paper_init, pgd_step, predict_one_step, rollout_predict};
pub use model::{
    validate_series, DirectionVector, FittedModel, Init, MonotoneStepFunction, NodeConfig, TimeSeriesMatrix,
};
