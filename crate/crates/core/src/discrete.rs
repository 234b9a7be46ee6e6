//! Binary-outcome models fitted by Newton-Raphson maximum likelihood.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::dataset::PropertyDataset;
use crate::design::{build_design, checked_qr, INTERCEPT};
use crate::dist::{chi2_sf, normal_cdf, normal_pdf, normal_sf};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::regress::{inference, ModelSpec};

pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Probit,
}

impl Link {
    pub fn cdf(self, eta: f64) -> f64 {
        match self {
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
            Link::Probit => normal_cdf(eta),
        }
    }

    pub fn density(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = self.cdf(eta);
                p * (1.0 - p)
            }
            Link::Probit => normal_pdf(eta),
        }
    }

    /// `ln F(eta)` and `ln (1 - F(eta))` without cancellation.
    fn log_probs(self, eta: f64) -> (f64, f64) {
        match self {
            Link::Logit => {
                // ln σ(η) = -ln(1 + e^-η)
                let ln1pexp = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
                (-ln1pexp(-eta), -ln1pexp(eta))
            }
            Link::Probit => (ln_normal_cdf(eta), ln_normal_cdf(-eta)),
        }
    }

    /// Score weight and negative second derivative of the per-observation
    /// log-likelihood with respect to the linear index.
    fn score_and_info(self, y: f64, eta: f64) -> (f64, f64) {
        match self {
            Link::Logit => {
                let p = self.cdf(eta);
                (y - p, p * (1.0 - p))
            }
            Link::Probit => {
                let q = 2.0 * y - 1.0;
                let m = mills(q * eta);
                let lambda = q * m;
                (lambda, lambda * (lambda + eta))
            }
        }
    }
}

fn ln_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        // asymptotic expansion of the lower tail
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * core::f64::consts::PI).ln() + (1.0 - 1.0 / (x * x)).ln()
    }
}

/// `φ(x) / Φ(x)`, stable for very negative `x`.
fn mills(x: f64) -> f64 {
    if x > -30.0 {
        normal_pdf(x) / normal_sf(-x)
    } else {
        -x / (1.0 - 1.0 / (x * x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFit {
    pub link: Link,
    pub response: String,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub vcov: Matrix,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub pseudo_r2: f64,
    /// LR statistic against the intercept-only model.
    pub lr_chi2: f64,
    pub lr_df: usize,
    pub lr_p: f64,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max: f64,
    /// Regressor means over the estimation sample.
    pub means: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub actual: Vec<f64>,
    pub rows: Vec<usize>,
}

impl BinaryFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coef[i])
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.link.cdf(dot(x, &self.coef))
    }
}

struct Evaluation {
    loglik: f64,
    gradient: Vec<f64>,
    information: Matrix,
}

fn evaluate(link: Link, y: &[f64], x: &Matrix, beta: &[f64], with_derivatives: bool) -> Evaluation {
    let k = x.cols();
    let mut loglik = 0.0;
    let mut gradient = vec![0.0; k];
    let mut information = Matrix::zeros(k, k);
    for (i, &yi) in y.iter().enumerate() {
        let row = x.row(i);
        let eta = dot(row, beta);
        let (lp, lq) = link.log_probs(eta);
        loglik += if yi > 0.5 { lp } else { lq };
        if with_derivatives {
            let (s, w) = link.score_and_info(yi, eta);
            for a in 0..k {
                gradient[a] += s * row[a];
                let wa = w * row[a];
                for b in 0..=a {
                    information[(a, b)] += wa * row[b];
                }
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            information[(b, a)] = information[(a, b)];
        }
    }
    Evaluation { loglik, gradient, information }
}

/// Newton-Raphson maximizer shared by the fits; returns
/// `(beta, loglik, iterations, converged, gradient max, information)`.
fn newton(link: Link, y: &[f64], x: &Matrix, names: &[String], start: Vec<f64>) -> Result<(Vec<f64>, Evaluation, usize, bool)> {
    let k = x.cols();
    let mut beta = start;
    let mut eval = evaluate(link, y, x, &beta, true);
    let mut prev_step = vec![0.0; k];
    let mut growth = vec![0usize; k];
    for iter in 0..MAX_ITER {
        let gmax = eval.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax <= GRADIENT_TOL {
            return Ok((beta, eval, iter, true));
        }
        let chol = match Cholesky::new(&eval.information) {
            Ok(c) => c,
            Err(_) => return Err(separation_or(names, &beta, Error::Singular("information matrix".into()))),
        };
        let step = chol.solve(&eval.gradient);
        let mut t = 1.0;
        let mut accepted = None;
        // near the optimum the likelihood change is below rounding; the
        // quadratic model is exact enough to take the full step
        if dot(&eval.gradient, &step) < 1e-10 {
            accepted = Some(beta.iter().zip(&step).map(|(b, s)| b + s).collect());
        }
        for _ in 0..=MAX_HALVINGS {
            if accepted.is_some() {
                break;
            }
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let ll = evaluate(link, y, x, &trial, false).loglik;
            if ll.is_finite() && ll >= eval.loglik {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            // no ascent possible at machine precision: the optimum is reached
            return Ok((beta, eval, iter, true));
        };
        for j in 0..k {
            let s = next[j] - beta[j];
            let diverging = next[j].abs() > SEPARATION_BOUND
                && s.signum() == next[j].signum()
                && s.abs() > 0.5 * prev_step[j].abs()
                && s.abs() > 1e-3;
            growth[j] = if diverging { growth[j] + 1 } else { 0 };
            prev_step[j] = s;
        }
        beta = next;
        eval = evaluate(link, y, x, &beta, true);
        if let Some(j) = (0..k).filter(|&j| growth[j] >= 3 && names[j] != INTERCEPT).max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs())) {
            return Err(Error::Separation { column: names[j].clone() });
        }
    }
    let gmax = eval.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if gmax <= GRADIENT_TOL {
        return Ok((beta, eval, MAX_ITER, true));
    }
    Err(separation_or(names, &beta, Error::NonConvergence { iterations: MAX_ITER, last: beta.clone() }))
}

fn separation_or(names: &[String], beta: &[f64], fallback: Error) -> Error {
    (0..beta.len())
        .filter(|&j| beta[j].abs() > SEPARATION_BOUND && names[j] != INTERCEPT)
        .max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs()))
        .map_or(fallback, |j| Error::Separation { column: names[j].clone() })
}

/// Intercept-only log-likelihood `n1 ln p + n0 ln(1 - p)`.
fn null_loglik(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let n1 = y.iter().filter(|&&v| v > 0.5).count() as f64;
    let p = n1 / n;
    n1 * p.ln() + (n - n1) * (1.0 - p).ln()
}

/// Fits a binary model on matrices (`y` in {0, 1}).
pub fn fit_binary_design(y: &[f64], x: &Matrix, names: &[String], link: Link, response: &str) -> Result<BinaryFit> {
    let n = y.len();
    if n != x.rows() {
        return Err(Error::DimensionMismatch("response and design differ in rows".into()));
    }
    if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("response value {} at row {i} is not 0/1", y[i])));
    }
    let n1 = y.iter().filter(|&&v| v == 1.0).count();
    if n1 == 0 || n1 == n {
        return Err(Error::SingleClass);
    }
    if n <= x.cols() {
        return Err(Error::InsufficientObservations { n, params: x.cols() });
    }
    checked_qr(x, names)?;

    let mut start = vec![0.0; x.cols()];
    if let Some(c) = names.iter().position(|s| s == INTERCEPT) {
        let pbar = n1 as f64 / n as f64;
        start[c] = match link {
            Link::Logit => (pbar / (1.0 - pbar)).ln(),
            Link::Probit => crate::dist::normal_quantile(pbar),
        };
    }
    let (coef, eval, iterations, converged) = newton(link, y, x, names, start)?;
    let vcov = Cholesky::new(&eval.information).map_err(|_| Error::Singular("information at the optimum".into()))?.inverse();
    let inf = inference(&coef, &vcov, None);
    let loglik_null = null_loglik(y);
    let has_const = names.iter().any(|s| s == INTERCEPT);
    let lr_df = x.cols() - usize::from(has_const);
    let lr_chi2 = (2.0 * (eval.loglik - loglik_null)).max(0.0);
    let probabilities: Vec<f64> = (0..n).map(|i| link.cdf(dot(x.row(i), &coef))).collect();
    let means = (0..x.cols()).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    // an intercept-only model reproduces the null likelihood exactly
    let pseudo_r2 = if lr_df == 0 { 0.0 } else { (1.0 - eval.loglik / loglik_null).max(0.0) };
    Ok(BinaryFit {
        link,
        response: response.to_string(),
        names: names.to_vec(),
        coef,
        vcov,
        se: inf.se,
        z: inf.stat,
        p: inf.p,
        ci_low: inf.ci_low,
        ci_high: inf.ci_high,
        loglik: if lr_df == 0 { loglik_null } else { eval.loglik },
        loglik_null,
        pseudo_r2,
        lr_chi2: if lr_df == 0 { 0.0 } else { lr_chi2 },
        lr_df,
        lr_p: chi2_sf(lr_chi2, lr_df as f64),
        n,
        iterations,
        converged,
        gradient_max: eval.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs())),
        means,
        probabilities,
        actual: y.to_vec(),
        rows: Vec::new(),
    })
}

/// Logit or probit fit of `spec` (absorption and VCE options are ignored).
pub fn fit_binary(ds: &PropertyDataset, spec: &ModelSpec, link: Link) -> Result<BinaryFit> {
    let design = build_design(ds, &spec.response, &spec.regressors, spec.intercept, &[])?;
    let mut fit = fit_binary_design(&design.y, &design.x, &design.names, link, &spec.response)?;
    fit.rows = design.rows;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub name: String,
    pub effect: f64,
    pub at: f64,
}

/// `dPr(y=1)/dx_j = f(x̄'β) β_j`, evaluated at `at` (regressor means by default).
pub fn marginal_effects(fit: &BinaryFit, at: Option<&[f64]>) -> Result<Vec<MarginalEffect>> {
    if !fit.converged {
        return Err(Error::NonConvergence { iterations: fit.iterations, last: fit.coef.clone() });
    }
    let point = at.unwrap_or(&fit.means);
    if point.len() != fit.coef.len() {
        return Err(Error::DimensionMismatch("evaluation point does not match the coefficients".into()));
    }
    let density = fit.link.density(dot(point, &fit.coef));
    Ok(fit
        .names
        .iter()
        .zip(&fit.coef)
        .zip(point)
        .filter(|((name, _), _)| name.as_str() != INTERCEPT)
        .map(|((name, b), &x)| MarginalEffect { name: name.clone(), effect: density * b, at: x })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

/// Likelihood-ratio test of a restricted model nested in an unrestricted one.
pub fn lr_test(unrestricted: &BinaryFit, restricted: &BinaryFit) -> Result<LrTest> {
    if unrestricted.n != restricted.n || unrestricted.actual != restricted.actual {
        return Err(Error::NotNested("models were fitted on different observations".into()));
    }
    if unrestricted.link != restricted.link {
        return Err(Error::NotNested("models use different links".into()));
    }
    if let Some(extra) = restricted.names.iter().find(|n| !unrestricted.names.contains(n)) {
        return Err(Error::NotNested(format!("`{extra}` is not in the unrestricted model")));
    }
    let diff = unrestricted.loglik - restricted.loglik;
    if diff < -1e-6 {
        return Err(Error::OptimizationFailure { unrestricted: unrestricted.loglik, restricted: restricted.loglik });
    }
    let chi2 = (2.0 * diff).max(0.0);
    let df = unrestricted.names.len() - restricted.names.len();
    Ok(LrTest { chi2, df, p: chi2_sf(chi2, df as f64) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionTable {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Rates as fractions; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub false_pos_rate_true_neg: Option<f64>,
    pub false_neg_rate_true_pos: Option<f64>,
    pub false_pos_rate_classified_pos: Option<f64>,
    pub false_neg_rate_classified_neg: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

impl ClassificationMetrics {
    pub fn from_table(t: &ConfusionTable) -> Self {
        let (tp, fp, fn_, tn) = (t.tp, t.fp, t.fn_, t.tn);
        Self {
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            ppv: ratio(tp, tp + fp),
            npv: ratio(tn, tn + fn_),
            false_pos_rate_true_neg: ratio(fp, tn + fp),
            false_neg_rate_true_pos: ratio(fn_, tp + fn_),
            false_pos_rate_classified_pos: ratio(fp, tp + fp),
            false_neg_rate_classified_neg: ratio(fn_, tn + fn_),
            accuracy: ratio(tp + tn, t.n()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub threshold: f64,
    pub table: ConfusionTable,
    pub metrics: ClassificationMetrics,
}

/// Classifies positive iff `prob >= threshold` and tabulates against `actual`.
pub fn classification_table(probs: &[f64], actual: &[f64], threshold: f64) -> Result<Classification> {
    if probs.len() != actual.len() {
        return Err(Error::DimensionMismatch("probabilities and outcomes differ in length".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let mut t = ConfusionTable { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&p, &y) in probs.iter().zip(actual) {
        match (p >= threshold, y != 0.0) {
            (true, true) => t.tp += 1,
            (true, false) => t.fp += 1,
            (false, true) => t.fn_ += 1,
            (false, false) => t.tn += 1,
        }
    }
    Ok(Classification { threshold, table: t, metrics: ClassificationMetrics::from_table(&t) })
}
