//! Instrumental variables: two-stage least squares, the Cragg-Donald
//! weak-instrument statistic, and the generalized spatial 2SLS estimator
//! for the spatial-lag model `y = λWy + Xβ + u`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::dataset::PropertyDataset;
use crate::design::{checked_qr, independent_columns, resolve_columns, INTERCEPT};
use crate::error::{Error, Result};
use crate::linalg::{dot, symmetric_eigen, Cholesky, Lu, Matrix, Qr};
use crate::regress::{gaussian_loglik, inference, FitResult, StatKind, Vce};
use crate::spatial::SpatialWeightMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvSpec {
    pub response: String,
    pub endogenous: Vec<String>,
    /// Excluded instruments.
    pub instruments: Vec<String>,
    /// Included exogenous controls.
    pub exogenous: Vec<String>,
    pub intercept: bool,
}

impl IvSpec {
    pub fn new(response: &str, endogenous: &[&str], instruments: &[&str], exogenous: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            response: response.to_string(),
            endogenous: own(endogenous),
            instruments: own(instruments),
            exogenous: own(exogenous),
            intercept: true,
        }
    }

    fn validate(&self) -> Result<()> {
        for e in &self.endogenous {
            if self.instruments.contains(e) || self.exogenous.contains(e) {
                return Err(Error::InvalidArgument(format!("`{e}` is listed as endogenous and exogenous")));
            }
        }
        if self.endogenous.contains(&self.response) {
            return Err(Error::InvalidArgument("response listed as endogenous".into()));
        }
        Ok(())
    }
}

/// Columns of an IV model after listwise deletion.
#[derive(Debug, Clone)]
pub struct IvData {
    pub y: Vec<f64>,
    pub endogenous: Matrix,
    pub endogenous_names: Vec<String>,
    /// Included exogenous columns, intercept last when requested.
    pub exogenous: Matrix,
    pub exogenous_names: Vec<String>,
    pub instruments: Matrix,
    pub instrument_names: Vec<String>,
    pub rows: Vec<usize>,
}

fn block(cols: &[(String, Vec<f64>)], rows: &[usize], intercept: bool) -> Result<(Matrix, Vec<String>)> {
    let mut columns: Vec<Vec<f64>> = cols.iter().map(|(_, c)| rows.iter().map(|&i| c[i]).collect()).collect();
    let mut names: Vec<String> = cols.iter().map(|(n, _)| n.clone()).collect();
    if intercept {
        columns.push(vec![1.0; rows.len()]);
        names.push(INTERCEPT.to_string());
    }
    let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
    let m = if refs.is_empty() { Matrix::zeros(rows.len(), 0) } else { Matrix::from_columns(&refs)? };
    Ok((m, names))
}

pub fn iv_data(ds: &PropertyDataset, spec: &IvSpec) -> Result<IvData> {
    spec.validate()?;
    let y_all = ds.column(&spec.response)?;
    let endo = resolve_columns(ds, &spec.endogenous)?;
    let exog = resolve_columns(ds, &spec.exogenous)?;
    let inst = resolve_columns(ds, &spec.instruments)?;
    let rows: Vec<usize> = (0..ds.len())
        .filter(|&i| !y_all[i].is_nan() && endo.iter().chain(&exog).chain(&inst).all(|(_, c)| !c[i].is_nan()))
        .collect();
    let (endogenous, endogenous_names) = block(&endo, &rows, false)?;
    let (exogenous, exogenous_names) = block(&exog, &rows, spec.intercept)?;
    let (instruments, instrument_names) = block(&inst, &rows, false)?;
    Ok(IvData {
        y: rows.iter().map(|&i| y_all[i]).collect(),
        endogenous,
        endogenous_names,
        exogenous,
        exogenous_names,
        instruments,
        instrument_names,
        rows,
    })
}

/// Raw 2SLS output on matrices.
#[derive(Debug, Clone)]
pub struct TslsCore {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(X̂'X̂)^-1` with `X̂ = P_Z X`.
    pub bread: Matrix,
    pub ssr: f64,
}

/// `β = (X'P_Z X)^-1 X'P_Z y`.
pub fn tsls_core(y: &[f64], x: &Matrix, z: &Matrix, x_names: &[String], z_names: &[String]) -> Result<TslsCore> {
    if z.cols() < x.cols() {
        return Err(Error::Underidentified(format!("{} instruments for {} regressors", z.cols(), x.cols())));
    }
    let zqr = checked_qr(z, z_names)?;
    let projected: Vec<Vec<f64>> = (0..x.cols()).map(|j| zqr.project(&x.column(j))).collect();
    let refs: Vec<&[f64]> = projected.iter().map(|c| c.as_slice()).collect();
    let xhat = Matrix::from_columns(&refs)?;
    let xqr = Qr::new(&xhat);
    if let Some(&j) = xqr.dependent_columns().first() {
        return Err(Error::Underidentified(format!(
            "`{}` is not identified by the instruments",
            x_names.get(j).map_or("?", |s| s.as_str())
        )));
    }
    let coef = xqr.solve(y);
    let fitted = x.matvec(&coef)?;
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
    let ssr = dot(&residuals, &residuals);
    Ok(TslsCore { coef, residuals, bread: xqr.xtx_inverse(), ssr })
}

fn iv_result(
    estimator: &str,
    response: &str,
    y: &[f64],
    names: Vec<String>,
    core: TslsCore,
    rows: Vec<usize>,
) -> Result<FitResult> {
    let n = y.len();
    let k = names.len();
    if n <= k {
        return Err(Error::InsufficientObservations { n, params: k });
    }
    let df_resid = n - k;
    let vcov = core.bread.scale(core.ssr / df_resid as f64);
    let inf = inference(&core.coef, &vcov, Some(df_resid as f64));
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let loglik = gaussian_loglik(core.ssr, n);
    let has_const = names.iter().any(|s| s == INTERCEPT);
    Ok(FitResult {
        estimator: estimator.to_string(),
        response: response.to_string(),
        fitted: y.iter().zip(&core.residuals).map(|(a, u)| a - u).collect(),
        residuals: core.residuals,
        df_model: k - usize::from(has_const),
        names,
        coef: core.coef,
        vcov,
        se: inf.se,
        stat: inf.stat,
        p: inf.p,
        ci_low: inf.ci_low,
        ci_high: inf.ci_high,
        stat_kind: StatKind::T,
        df_inference: Some(df_resid as f64),
        vce: Vce::Classical,
        n,
        df_resid,
        df_absorbed: 0,
        n_clusters: None,
        r2: 1.0 - core.ssr / sst,
        r2_within: None,
        rmse: (core.ssr / df_resid as f64).sqrt(),
        ssr: core.ssr,
        loglik,
        k_params: k,
        aic: -2.0 * loglik + 2.0 * k as f64,
        bic: -2.0 * loglik + k as f64 * (n as f64).ln(),
        rows,
        omitted: Vec::new(),
    })
}

/// Two-stage least squares with classical variance `σ̂² (X'P_Z X)^-1`,
/// `σ̂²` from structural residuals with `n - k` degrees of freedom.
pub fn fit_2sls(ds: &PropertyDataset, spec: &IvSpec) -> Result<FitResult> {
    let d = iv_data(ds, spec)?;
    if d.instruments.cols() < d.endogenous.cols() {
        return Err(Error::Underidentified(format!(
            "{} excluded instruments for {} endogenous regressors",
            d.instruments.cols(),
            d.endogenous.cols()
        )));
    }
    let x = d.endogenous.hstack(&d.exogenous)?;
    let z = d.instruments.hstack(&d.exogenous)?;
    let x_names: Vec<String> = d.endogenous_names.iter().chain(&d.exogenous_names).cloned().collect();
    let z_names: Vec<String> = d.instrument_names.iter().chain(&d.exogenous_names).cloned().collect();
    let core = tsls_core(&d.y, &x, &z, &x_names, &z_names)?;
    iv_result("2sls", &spec.response, &d.y, x_names, core, d.rows)
}

/// Stock-Yogo critical values for one endogenous regressor and one
/// excluded instrument: maximal size of a nominal 5% Wald test.
pub const STOCK_YOGO_1X1: [(f64, f64); 4] = [(0.10, 16.38), (0.15, 8.96), (0.20, 6.66), (0.25, 5.53)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IvStrength {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    /// Maximal rejection rate of the nominal 5% Wald test.
    pub size: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakIvReport {
    pub stat: f64,
    pub n: usize,
    pub n_endogenous: usize,
    pub n_instruments: usize,
    pub df_denominator: usize,
    pub critical_values: Vec<CriticalValue>,
    pub selected_size: f64,
    /// `None` when no critical values are tabulated for this shape.
    pub conclusion: Option<IvStrength>,
}

impl WeakIvReport {
    pub fn verdict_at(&self, size: f64) -> Option<IvStrength> {
        let cv = self.critical_values.iter().find(|c| (c.size - size).abs() < 1e-12)?;
        Some(if self.stat > cv.value { IvStrength::Strong } else { IvStrength::Weak })
    }
}

/// Minimum eigenvalue of the Cragg-Donald matrix. With one endogenous
/// regressor this is the first-stage F on the excluded instruments after
/// partialling out the included controls.
pub fn weak_iv_test(ds: &PropertyDataset, spec: &IvSpec) -> Result<WeakIvReport> {
    let d = iv_data(ds, spec)?;
    let l = d.instruments.cols();
    let k = d.endogenous.cols();
    if l == 0 {
        return Err(Error::ZeroInstruments);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("no endogenous regressors".into()));
    }
    if l < k {
        return Err(Error::Underidentified(format!("{l} excluded instruments for {k} endogenous regressors")));
    }
    let n = d.y.len();
    let kx = d.exogenous.cols();
    if n <= kx + l {
        return Err(Error::InsufficientObservations { n, params: kx + l });
    }
    let partial = |m: &Matrix| -> Result<Matrix> {
        if kx == 0 {
            return Ok(m.clone());
        }
        let wqr = checked_qr(&d.exogenous, &d.exogenous_names)?;
        let cols: Vec<Vec<f64>> = (0..m.cols()).map(|j| wqr.annihilate(&m.column(j))).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        Matrix::from_columns(&refs)
    };
    let x_t = partial(&d.endogenous)?;
    let z_t = partial(&d.instruments)?;
    let zqr = checked_qr(&z_t, &d.instrument_names)?;
    let px: Vec<Vec<f64>> = (0..k).map(|j| zqr.project(&x_t.column(j))).collect();
    let mx: Vec<Vec<f64>> = (0..k).map(|j| zqr.annihilate(&x_t.column(j))).collect();
    let df_denominator = n - kx - l;
    let mut explained = Matrix::zeros(k, k);
    let mut noise = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            explained[(a, b)] = dot(&px[a], &px[b]);
            noise[(a, b)] = dot(&mx[a], &mx[b]) / df_denominator as f64;
        }
    }
    let chol = Cholesky::new(&noise)?;
    // G = L^-1 A L^-T / l
    let mut half = Matrix::zeros(k, k);
    for j in 0..k {
        for (i, v) in chol.solve_lower(&explained.column(j)).into_iter().enumerate() {
            half[(i, j)] = v;
        }
    }
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for (j, v) in chol.solve_lower(half.row(i)).into_iter().enumerate() {
            g[(i, j)] = v / l as f64;
        }
    }
    let (eig, _) = symmetric_eigen(&g)?;
    let stat = eig[0].max(0.0);

    let critical_values: Vec<CriticalValue> = if k == 1 && l == 1 {
        STOCK_YOGO_1X1.iter().map(|&(size, value)| CriticalValue { size, value }).collect()
    } else {
        Vec::new()
    };
    let mut report = WeakIvReport {
        stat,
        n,
        n_endogenous: k,
        n_instruments: l,
        df_denominator,
        critical_values,
        selected_size: 0.10,
        conclusion: None,
    };
    report.conclusion = report.verdict_at(report.selected_size);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarFit {
    /// Coefficients with the spatial lag first, named `lambda`.
    pub fit: FitResult,
    pub lambda: f64,
    pub lambda_se: f64,
    /// Squared correlation of `y` with the reduced-form prediction.
    pub pseudo_r2: f64,
    pub lambda_out_of_range: bool,
    /// False when `Wy` vanished (e.g. `W = 0`) and the model fell back to 2SLS.
    pub lambda_identified: bool,
    pub n_instruments: usize,
}

fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

fn squared_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab * sab / (saa * sbb)
}

/// Generalized spatial two-stage least squares for the spatial-lag model.
///
/// `Wy` is instrumented by `[Z, WZ, W²Z]`, where `Z` holds the included
/// exogenous columns and the excluded instruments; the constant is not
/// lagged and linearly dependent instrument columns are dropped.
pub fn fit_sar_gs2sls(ds: &PropertyDataset, spec: &IvSpec, w: &SpatialWeightMatrix) -> Result<SarFit> {
    if w.n() != ds.len() {
        return Err(Error::DimensionMismatch(format!("W is {0}x{0} for {1} observations", w.n(), ds.len())));
    }
    if !w.is_row_standardized() {
        return Err(Error::InvalidArgument("W must be row-standardized".into()));
    }
    let d = iv_data(ds, spec)?;
    let w = if d.rows.len() == ds.len() { w.clone() } else { w.subset(&d.rows) };

    let z0 = d.instruments.hstack(&d.exogenous)?;
    let z0_names: Vec<String> = d.instrument_names.iter().chain(&d.exogenous_names).cloned().collect();
    let x_base = d.endogenous.hstack(&d.exogenous)?;
    let x_base_names: Vec<String> = d.endogenous_names.iter().chain(&d.exogenous_names).cloned().collect();

    let wy = w.lag(&d.y)?;
    if wy.iter().all(|v| *v == 0.0) {
        let core = tsls_core(&d.y, &x_base, &z0, &x_base_names, &z0_names)?;
        let fit = iv_result("gs2sls", &spec.response, &d.y, x_base_names, core, d.rows)?;
        let pseudo_r2 = squared_correlation(&d.y, &fit.fitted);
        return Ok(SarFit {
            fit,
            lambda: 0.0,
            lambda_se: f64::NAN,
            pseudo_r2,
            lambda_out_of_range: false,
            lambda_identified: false,
            n_instruments: z0.cols(),
        });
    }

    let lag_idx: Vec<usize> = (0..z0.cols()).filter(|&j| !is_constant(&z0.column(j))).collect();
    let z_lag = z0.select_columns(&lag_idx);
    let wz = w.lag_matrix(&z_lag)?;
    let w2z = w.lag_matrix(&wz)?;
    let h_full = z0.hstack(&wz)?.hstack(&w2z)?;
    let keep = independent_columns(&h_full);
    let h = h_full.select_columns(&keep);
    let h_names: Vec<String> = (0..h.cols()).map(|j| format!("h{j}")).collect();

    let wy_col = Matrix::from_columns(&[&wy])?;
    let x = wy_col.hstack(&x_base)?;
    let mut names = vec!["lambda".to_string()];
    names.extend(x_base_names);
    let core = tsls_core(&d.y, &x, &h, &names, &h_names)?;
    let coef = core.coef.clone();
    let fit = iv_result("gs2sls", &spec.response, &d.y, names, core, d.rows)?;
    let lambda = coef[0];
    let lambda_se = fit.se[0];
    let lambda_out_of_range = !(lambda > -1.0 && lambda < 1.0);

    let xb = x_base.matvec(&coef[1..])?;
    let reduced = if lambda_out_of_range {
        None
    } else {
        let n = d.y.len();
        let mut a = w.weights.scale(-lambda);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        Lu::new(&a).ok().map(|lu| lu.solve(&xb))
    };
    let prediction = reduced.unwrap_or_else(|| fit.fitted.clone());
    let pseudo_r2 = squared_correlation(&d.y, &prediction);
    Ok(SarFit { fit, lambda, lambda_se, pseudo_r2, lambda_out_of_range, lambda_identified: true, n_instruments: h.cols() })
}
