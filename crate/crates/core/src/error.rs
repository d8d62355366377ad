use thiserror::Error;

/// Errors produced by the numerical primitives, estimators and file formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// Hard thresholding left nothing but zeros, so the direction cannot be normalized.
    #[error("degenerate direction: thresholded vector is zero")]
    DegenerateDirection,

    #[error("invalid or non-finite value at row {row}, column {col}")]
    Ingest { row: usize, col: usize },

    #[error("size error: {0}")]
    Size(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("initialization degenerate for node {node}")]
    InitDegenerate { node: usize },

    #[error("fit failed for node(s) {nodes:?}")]
    Fit { nodes: Vec<usize> },

    #[error("fold error: {0}")]
    Fold(String),

    #[error("degenerate test: differences have zero variance")]
    DegenerateTest,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
