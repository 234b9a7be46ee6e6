//! Estimators and data transforms for spatial hedonic price models.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function over in-memory data: CSV ingestion, configuration and report
//! rendering live in the `hedonic-cli` crate.
//!
//! Module map:
//! - [`dataset`]: property records, derived columns, descriptive statistics
//! - [`spatial`]: distances, k-means, hierarchical clustering, weight matrices, ANOVA/Bartlett
//! - [`regress`]: OLS, fixed-effect absorption, cluster-robust variance, fractional polynomials
//! - [`iv`]: 2SLS, weak-instrument diagnostics, spatial-lag GS2SLS
//! - [`discrete`]: logit/probit by Newton-Raphson, marginal effects, LR tests, classification
//! - [`panel`]: within and random-effects estimators, Hausman test
//! - [`eval`]: train/test splits, prediction metrics, synthetic markets, Monte Carlo summaries

#![no_std]

// Modules import `num_traits::Float` for `ln`, `exp`, `sqrt` on f64. When std
// is linked elsewhere in the build its inherent methods win and the import
// looks unused, hence the local `allow`s.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod design;
pub mod discrete;
pub mod dist;
pub mod error;
pub mod eval;
pub mod iv;
pub mod linalg;
pub mod panel;
pub mod regress;
pub mod spatial;

pub use dataset::{PropertyDataset, PropertyRecord, Style};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use regress::{FitResult, ModelSpec, Vce};
