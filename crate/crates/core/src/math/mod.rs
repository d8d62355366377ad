//! Order-restricted regression and sparse projection primitives.

pub mod isotonic;
pub mod linalg;
pub mod sparse;

pub use isotonic::{induced_ordering, iso_fit, iso_wrt, pava, pava_unit, InducedOrdering, IsoFit, WeightedSequence};
pub use sparse::{hard_threshold, orth_project, sparse_normalize};
