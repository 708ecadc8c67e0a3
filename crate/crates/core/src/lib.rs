//! Sparse-modeling feature selection for high-dimensional data.
//!
//! The pipeline standardizes a feature matrix, optionally balances classes
//! by random over-sampling, selects features with an L1-regularized
//! regression (Lasso, Elastic Net, or proximal gradient) or reduces them
//! with PCA / RBF kernel PCA, then classifies with brute-force KNN and
//! reports accuracy, precision, recall, F1 and the confusion matrix.

// `!(x >= 0.0)` is the NaN-rejecting form; index loops mirror the math
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dimred;
pub mod error;
pub mod metrics;
pub mod neighbors;
pub mod pipeline;
pub mod preprocess;
pub mod sparse;
pub mod synth;
pub mod tensorio;

pub use error::{Error, Result};
