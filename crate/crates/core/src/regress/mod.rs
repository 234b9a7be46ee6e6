//! Linear least squares: OLS, absorbed fixed effects, robust and
//! cluster-robust variance, fractional-polynomial search.

mod absorb;
mod fracpoly;
mod ols;
mod vcov;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::dist::{normal_cdf, normal_quantile, t_quantile, t_two_sided};
use crate::linalg::Matrix;

pub use absorb::{absorb_columns, absorb_transform, AbsorbedDesign};
pub use fracpoly::{fracpoly_candidates, fracpoly_search, FracPolyCandidate, FracPolyResult, FP_POWERS};
pub use ols::{fit_design, fit_ols, ols_core, OlsCore};
pub use vcov::{cluster_robust_vcov, hc1_vcov};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vce {
    #[default]
    Classical,
    /// Heteroskedasticity-robust, HC1 small-sample scaling.
    RobustHc1,
    /// Cluster-robust on the named grouping column.
    Cluster(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub regressors: Vec<String>,
    pub intercept: bool,
    pub absorb: Option<String>,
    pub vce: Vce,
}

impl ModelSpec {
    pub fn new(response: &str, regressors: &[&str]) -> Self {
        Self {
            response: response.to_string(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            intercept: true,
            absorb: None,
            vce: Vce::Classical,
        }
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub fn absorbing(mut self, group: &str) -> Self {
        self.absorb = Some(group.to_string());
        self
    }

    pub fn with_vce(mut self, vce: Vce) -> Self {
        self.vce = vce;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    T,
    Z,
}

/// Estimates plus inference and fit statistics for a linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: String,
    pub response: String,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub vcov: Matrix,
    pub se: Vec<f64>,
    pub stat: Vec<f64>,
    pub p: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub stat_kind: StatKind,
    /// Degrees of freedom of the reference t distribution.
    pub df_inference: Option<f64>,
    pub vce: Vce,
    pub n: usize,
    pub df_model: usize,
    pub df_resid: usize,
    pub df_absorbed: usize,
    pub n_clusters: Option<usize>,
    pub r2: f64,
    pub r2_within: Option<f64>,
    pub rmse: f64,
    pub ssr: f64,
    pub loglik: f64,
    pub k_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Dataset rows used in the fit.
    pub rows: Vec<usize>,
    /// Regressors dropped before estimation (constant after a transform).
    pub omitted: Vec<String>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coef[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.se[i])
    }

    /// Linear predictor `X b` for new rows laid out like the fitted design.
    pub fn predict(&self, x: &Matrix) -> crate::Result<Vec<f64>> {
        x.matvec(&self.coef)
    }
}

/// Gaussian log-likelihood with the MLE variance `SSR / n`.
pub fn gaussian_loglik(ssr: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * n * ((2.0 * core::f64::consts::PI).ln() + (ssr / n).ln() + 1.0)
}

pub(crate) struct Inference {
    pub se: Vec<f64>,
    pub stat: Vec<f64>,
    pub p: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

/// Standard errors, test statistics, p-values and 95% intervals from a
/// variance matrix; `df = None` uses the normal reference.
pub(crate) fn inference(coef: &[f64], vcov: &Matrix, df: Option<f64>) -> Inference {
    let crit = match df {
        Some(df) => t_quantile(0.975, df),
        None => normal_quantile(0.975),
    };
    let se: Vec<f64> = vcov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let stat: Vec<f64> = coef.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p = stat
        .iter()
        .map(|&t| match df {
            Some(df) => t_two_sided(t, df),
            None => 2.0 * normal_cdf(-t.abs()),
        })
        .collect();
    let ci_low = coef.iter().zip(&se).map(|(b, s)| b - crit * s).collect();
    let ci_high = coef.iter().zip(&se).map(|(b, s)| b + crit * s).collect();
    Inference { se, stat, p, ci_low, ci_high }
}

/// Significance stars: `***` p < .01, `**` p < .05, `*` p < .1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}
