//! Covariate-shift adaptation toolkit.
//!
//! Diagnostics (effective sample size, order-2 Rényi divergence, the
//! importance-weighted generalization bound), density-ratio estimation by
//! probabilistic classification, mutual-information feature selection with
//! Gaussian mixtures, sample-weighted decision trees, and the shift-injection
//! benchmark harness that ties them together.

pub mod data;
pub mod error;
pub mod gmm;
pub mod ess;
pub mod experiments;
pub mod linalg;
pub mod logistic;
pub mod mi;
pub mod ratio;
pub mod rng;
pub mod shift;
pub mod tree;

pub use error::{Error, Result};
