use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{gaussian_loglik, inference, absorb_transform, cluster_robust_vcov, hc1_vcov, FitResult, ModelSpec, StatKind, Vce};
use crate::dataset::PropertyDataset;
use crate::design::{build_design, checked_qr, group_ids, Design};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[allow(unused_imports)]
use num_traits::Float as _;

/// Coefficients, residuals and `(X'X)^-1` of a least-squares fit.
#[derive(Debug, Clone)]
pub struct OlsCore {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub xtx_inv: Matrix,
    pub ssr: f64,
}

pub fn ols_core(y: &[f64], x: &Matrix, names: &[String]) -> Result<OlsCore> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch("response and design differ in rows".into()));
    }
    let qr = checked_qr(x, names)?;
    let coef = qr.solve(y);
    let residuals = qr.annihilate(y);
    let fitted = y.iter().zip(&residuals).map(|(a, u)| a - u).collect();
    let ssr = dot(&residuals, &residuals);
    Ok(OlsCore { coef, residuals, fitted, xtx_inv: qr.xtx_inverse(), ssr })
}

/// Fits `spec` on the dataset with listwise deletion.
pub fn fit_ols(ds: &PropertyDataset, spec: &ModelSpec) -> Result<FitResult> {
    let mut aux: Vec<&str> = Vec::new();
    if let Some(a) = &spec.absorb {
        aux.push(a);
    }
    if let Vce::Cluster(c) = &spec.vce {
        aux.push(c);
    }
    let design = build_design(ds, &spec.response, &spec.regressors, spec.intercept && spec.absorb.is_none(), &aux)?;
    let groups = match &spec.absorb {
        Some(a) => Some(group_ids(&design.aux[a.as_str()]).0),
        None => None,
    };
    let estimator = if spec.absorb.is_some() { "areg" } else { "ols" };
    fit_design(&design, &spec.vce, groups.as_deref(), estimator)
}

/// Fits an already-built design. `absorb` holds group ids `0..G` to be
/// swept out by within-group demeaning.
pub fn fit_design(design: &Design, vce: &Vce, absorb: Option<&[usize]>, estimator: &str) -> Result<FitResult> {
    let n = design.n();
    let (y, x, df_absorbed) = match absorb {
        Some(groups) => {
            let a = absorb_transform(&design.y, &design.x, groups);
            (a.y, a.x, a.df_absorbed)
        }
        None => (design.y.clone(), design.x.clone(), 0),
    };
    let k = x.cols();
    if n <= k + df_absorbed {
        return Err(Error::InsufficientObservations { n, params: k + df_absorbed });
    }
    let core = ols_core(&y, &x, &design.names)?;
    let df_resid = n - k - df_absorbed;
    let k_params = k + df_absorbed;

    let (vcov, n_clusters) = match vce {
        Vce::Classical => (core.xtx_inv.scale(core.ssr / df_resid as f64), None),
        Vce::RobustHc1 => (hc1_vcov(&x, &core.residuals, &core.xtx_inv, df_resid)?, None),
        Vce::Cluster(col) => {
            let labels = design.aux.get(col.as_str()).ok_or_else(|| Error::MissingColumn(col.clone()))?;
            // absorbed groups count as a single constant in the small-sample factor
            let k_adj = if df_absorbed > 0 { k + 1 } else { k };
            let (v, g) = cluster_robust_vcov(&x, &core.residuals, &core.xtx_inv, labels, k_adj)?;
            (v, Some(g))
        }
    };
    let df_inference = match n_clusters {
        Some(g) => (g - 1) as f64,
        None => df_resid as f64,
    };
    let inf = inference(&core.coef, &vcov, Some(df_inference));

    let has_const = design.has_intercept() || df_absorbed > 0;
    let sst = if has_const {
        let m = design.y.iter().sum::<f64>() / n as f64;
        design.y.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    } else {
        dot(&design.y, &design.y)
    };
    let r2 = 1.0 - core.ssr / sst;
    let r2_within = (df_absorbed > 0).then(|| 1.0 - core.ssr / dot(&y, &y));
    let loglik = gaussian_loglik(core.ssr, n);
    let fitted = design.y.iter().zip(&core.residuals).map(|(a, u)| a - u).collect();

    Ok(FitResult {
        estimator: estimator.to_string(),
        response: design.response.clone(),
        names: design.names.clone(),
        coef: core.coef,
        vcov,
        se: inf.se,
        stat: inf.stat,
        p: inf.p,
        ci_low: inf.ci_low,
        ci_high: inf.ci_high,
        stat_kind: StatKind::T,
        df_inference: Some(df_inference),
        vce: vce.clone(),
        n,
        df_model: k - usize::from(design.has_intercept()),
        df_resid,
        df_absorbed,
        n_clusters,
        r2,
        r2_within,
        rmse: (core.ssr / df_resid as f64).sqrt(),
        ssr: core.ssr,
        loglik,
        k_params,
        aic: -2.0 * loglik + 2.0 * k_params as f64,
        bic: -2.0 * loglik + k_params as f64 * (n as f64).ln(),
        residuals: core.residuals,
        fitted,
        rows: design.rows.clone(),
        omitted: Vec::new(),
    })
}
