//! Mixtures of lasso regressions with Student-t errors, fitted by particle Gibbs.
//!
//! The regression coefficients, noise variances and mixture weights are
//! integrated out analytically; the sampler works on the labels, the
//! per-observation scale variables, the variable-inclusion indicators and
//! the slab variances.

pub mod diagnostics;
pub mod error;
pub mod finance;
pub mod model;
pub mod pgibbs;
pub mod simgen;
pub mod smc;

pub use error::{Error, Result};
pub use model::{
    ClusterParams, Dataset, Hyperparameters, LatentState, ResampleTrigger, ResamplingScheme, Truth,
};
