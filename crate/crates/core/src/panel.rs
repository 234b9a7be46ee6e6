//! Fixed-effects (within) and random-effects (GLS) panel estimators and the
//! Hausman contrast between them.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::dataset::PropertyDataset;
use crate::design::{build_design, group_ids, independent_columns, Design, INTERCEPT};
use crate::dist::chi2_sf;
use crate::error::{Error, Result};
use crate::linalg::{dot, psd_pinv, Matrix};
use crate::regress::{
    absorb_transform, cluster_robust_vcov, fit_design, gaussian_loglik, inference, ols_core, FitResult, ModelSpec,
    StatKind, Vce,
};

/// Panel identifiers: the unit column and, optionally, the time column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelIndex {
    pub unit: String,
    pub time: Option<String>,
}

impl PanelIndex {
    pub fn new(unit: &str) -> Self {
        Self { unit: unit.into(), time: None }
    }

    pub fn with_time(mut self, time: &str) -> Self {
        self.time = Some(time.into());
        self
    }

    /// Checks that every (unit, time) pair occurs at most once.
    pub fn validate(&self, ds: &PropertyDataset) -> Result<()> {
        let unit = ds.column(&self.unit)?;
        let Some(t) = &self.time else { return Ok(()) };
        let time = ds.column(t)?;
        let mut pairs: Vec<(u64, u64)> = unit.iter().zip(&time).map(|(u, t)| (u.to_bits(), t.to_bits())).collect();
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("({}, {t}) pairs are not unique", self.unit)));
        }
        Ok(())
    }
}

fn unit_counts(ids: &[usize], g: usize) -> Vec<usize> {
    let mut counts = vec![0usize; g];
    for &id in ids {
        counts[id] += 1;
    }
    counts
}

fn unit_means(v: &[f64], ids: &[usize], counts: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; counts.len()];
    for (&x, &id) in v.iter().zip(ids) {
        sums[id] += x;
    }
    sums.iter().zip(counts).map(|(s, &c)| s / c as f64).collect()
}

fn is_zero_column(demeaned: &[f64], original: &[f64]) -> bool {
    let scale = original.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    demeaned.iter().all(|v| v.abs() <= 1e-10 * scale)
}

fn restrict(design: &Design, keep: &[usize]) -> Design {
    Design {
        response: design.response.clone(),
        y: design.y.clone(),
        x: design.x.select_columns(keep),
        names: keep.iter().map(|&j| design.names[j].clone()).collect(),
        rows: design.rows.clone(),
        aux: design.aux.clone(),
    }
}

/// Within estimator on a prepared design (no intercept column) with unit ids
/// `0..G`. Regressors that are constant within every unit are dropped and
/// listed in `omitted`. `Vce::RobustHc1` clusters on `unit_col`.
pub fn fe_from_design(design: &Design, ids: &[usize], unit_col: &str, vce: &Vce) -> Result<FitResult> {
    let g = ids.iter().copied().max().map_or(0, |m| m + 1);
    if unit_counts(ids, g).iter().all(|&c| c < 2) {
        return Err(Error::DegeneratePanel(format!("every `{unit_col}` unit has a single observation")));
    }
    let demeaned = absorb_transform(&design.y, &design.x, ids);
    let (keep, dropped): (Vec<usize>, Vec<usize>) =
        (0..design.x.cols()).partition(|&j| !is_zero_column(&demeaned.x.column(j), &design.x.column(j)));
    if keep.is_empty() {
        return Err(Error::DegeneratePanel("no regressor varies within units".into()));
    }
    let vce = match vce {
        Vce::RobustHc1 => Vce::Cluster(unit_col.into()),
        other => other.clone(),
    };
    let mut fit = fit_design(&restrict(design, &keep), &vce, Some(ids), "fe")?;
    fit.omitted = dropped.iter().map(|&j| design.names[j].clone()).collect();
    Ok(fit)
}

fn aux_columns<'a>(index: &'a PanelIndex, vce: &'a Vce) -> Vec<&'a str> {
    let mut aux = vec![index.unit.as_str()];
    if let Vce::Cluster(c) = vce {
        if c != &index.unit {
            aux.push(c.as_str());
        }
    }
    aux
}

/// Fixed-effects (within) fit of `spec` over units of `index`.
pub fn fit_fe(ds: &PropertyDataset, index: &PanelIndex, spec: &ModelSpec) -> Result<FitResult> {
    index.validate(ds)?;
    let design = build_design(ds, &spec.response, &spec.regressors, false, &aux_columns(index, &spec.vce))?;
    let (ids, _) = group_ids(&design.aux[index.unit.as_str()]);
    fe_from_design(&design, &ids, &index.unit, &spec.vce)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReFit {
    pub fit: FitResult,
    /// Quasi-demeaning factor per unit, in order of first appearance.
    pub theta: Vec<f64>,
    pub sigma_u: f64,
    pub sigma_e: f64,
    /// True when the estimated σ_u² was negative and set to zero.
    pub clipped: bool,
}

/// Swamy-Arora variance components `(σ_u², σ_e², clipped)` for a design
/// whose last column is the intercept.
pub fn swamy_arora(design: &Design, ids: &[usize]) -> Result<(f64, f64, bool)> {
    let n = design.n();
    let g = ids.iter().copied().max().map_or(0, |m| m + 1);
    let counts = unit_counts(ids, g);
    if g < 2 {
        return Err(Error::DegeneratePanel("random effects need at least two units".into()));
    }

    // within regression: slopes that vary within units
    let slopes: Vec<usize> = (0..design.x.cols()).filter(|&j| design.names[j] != INTERCEPT).collect();
    let demeaned = absorb_transform(&design.y, &design.x.select_columns(&slopes), ids);
    let varying: Vec<usize> = (0..slopes.len())
        .filter(|&j| !is_zero_column(&demeaned.x.column(j), &design.x.column(slopes[j])))
        .collect();
    let xw = demeaned.x.select_columns(&varying);
    let xw = xw.select_columns(&independent_columns(&xw));
    if n <= g + xw.cols() {
        return Err(Error::DegeneratePanel("no within-unit degrees of freedom".into()));
    }
    let ssr_w = if xw.cols() == 0 {
        dot(&demeaned.y, &demeaned.y)
    } else {
        let names: Vec<String> = (0..xw.cols()).map(|j| format!("w{j}")).collect();
        ols_core(&demeaned.y, &xw, &names)?.ssr
    };
    let sigma_e2 = ssr_w / (n - g - xw.cols()) as f64;

    // between regression on unit means
    let ybar = unit_means(&design.y, ids, &counts);
    let cols: Vec<Vec<f64>> = design.x.columns().iter().map(|c| unit_means(c, ids, &counts)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let xb = Matrix::from_columns(&refs)?;
    let xb = xb.select_columns(&independent_columns(&xb));
    if g <= xb.cols() {
        return Err(Error::InsufficientObservations { n: g, params: xb.cols() });
    }
    let names: Vec<String> = (0..xb.cols()).map(|j| format!("b{j}")).collect();
    let sigma_b2 = ols_core(&ybar, &xb, &names)?.ssr / (g - xb.cols()) as f64;

    let t_harmonic = g as f64 / counts.iter().map(|&c| 1.0 / c as f64).sum::<f64>();
    let sigma_u2 = sigma_b2 - sigma_e2 / t_harmonic;
    Ok(if sigma_u2 < 0.0 { (0.0, sigma_e2, true) } else { (sigma_u2, sigma_e2, false) })
}

/// GLS by OLS on quasi-demeaned data for given variance components. The
/// design must contain the intercept; its transformed column is `1 - θ_i`.
pub fn re_from_design(
    design: &Design,
    ids: &[usize],
    sigma_u2: f64,
    sigma_e2: f64,
    unit_col: &str,
    vce: &Vce,
) -> Result<(FitResult, Vec<f64>)> {
    if !(sigma_u2 >= 0.0 && sigma_e2 >= 0.0 && sigma_u2 + sigma_e2 > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid variance components ({sigma_u2}, {sigma_e2})")));
    }
    let n = design.n();
    let g = ids.iter().copied().max().map_or(0, |m| m + 1);
    let counts = unit_counts(ids, g);
    let theta: Vec<f64> = counts.iter().map(|&t| 1.0 - (sigma_e2 / (sigma_e2 + t as f64 * sigma_u2)).sqrt()).collect();

    let quasi = |v: &[f64]| -> Vec<f64> {
        let m = unit_means(v, ids, &counts);
        v.iter().zip(ids).map(|(x, &id)| x - theta[id] * m[id]).collect()
    };
    let y = quasi(&design.y);
    let transformed: Vec<Vec<f64>> = design.x.columns().iter().map(|c| quasi(c)).collect();
    let (keep, dropped): (Vec<usize>, Vec<usize>) =
        (0..design.x.cols()).partition(|&j| !is_zero_column(&transformed[j], &design.x.column(j)));
    let refs: Vec<&[f64]> = keep.iter().map(|&j| transformed[j].as_slice()).collect();
    let x = Matrix::from_columns(&refs)?;
    let names: Vec<String> = keep.iter().map(|&j| design.names[j].clone()).collect();
    let k = x.cols();
    if n <= k {
        return Err(Error::InsufficientObservations { n, params: k });
    }
    let core = ols_core(&y, &x, &names)?;

    let cluster = match vce {
        Vce::Classical => None,
        Vce::RobustHc1 => Some(unit_col),
        Vce::Cluster(c) => Some(c.as_str()),
    };
    let (vcov, n_clusters) = match cluster {
        None => (core.xtx_inv.scale(sigma_e2), None),
        Some(c) => {
            let labels = design.aux.get(c).ok_or_else(|| Error::MissingColumn(c.into()))?;
            let (v, gc) = cluster_robust_vcov(&x, &core.residuals, &core.xtx_inv, labels, k)?;
            (v, Some(gc))
        }
    };
    let inf = inference(&core.coef, &vcov, None);

    // fit statistics on the original scale
    let fitted = design.x.select_columns(&keep).matvec(&core.coef)?;
    let residuals: Vec<f64> = design.y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
    let ybar = design.y.iter().sum::<f64>() / n as f64;
    let corr2 = {
        let fbar = fitted.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, f) in design.y.iter().zip(&fitted) {
            sxy += (a - ybar) * (f - fbar);
            sxx += (f - fbar) * (f - fbar);
            syy += (a - ybar) * (a - ybar);
        }
        if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 }
    };
    let df_resid = n - k;
    let loglik = gaussian_loglik(core.ssr, n);
    let has_const = keep.iter().any(|&j| design.names[j] == INTERCEPT);
    Ok((
        FitResult {
            estimator: "re".into(),
            response: design.response.clone(),
            names,
            coef: core.coef,
            vcov,
            se: inf.se,
            stat: inf.stat,
            p: inf.p,
            ci_low: inf.ci_low,
            ci_high: inf.ci_high,
            stat_kind: StatKind::Z,
            df_inference: None,
            vce: vce.clone(),
            n,
            df_model: k - usize::from(has_const),
            df_resid,
            df_absorbed: 0,
            n_clusters,
            r2: corr2,
            r2_within: None,
            rmse: sigma_e2.sqrt(),
            ssr: core.ssr,
            loglik,
            k_params: k,
            aic: -2.0 * loglik + 2.0 * k as f64,
            bic: -2.0 * loglik + k as f64 * (n as f64).ln(),
            residuals,
            fitted,
            rows: design.rows.clone(),
            omitted: dropped.iter().map(|&j| design.names[j].clone()).collect(),
        },
        theta,
    ))
}

/// Random-effects GLS fit of `spec` with Swamy-Arora variance components.
pub fn fit_re(ds: &PropertyDataset, index: &PanelIndex, spec: &ModelSpec) -> Result<ReFit> {
    index.validate(ds)?;
    let design = build_design(ds, &spec.response, &spec.regressors, true, &aux_columns(index, &spec.vce))?;
    let (ids, _) = group_ids(&design.aux[index.unit.as_str()]);
    let (sigma_u2, sigma_e2, clipped) = swamy_arora(&design, &ids)?;
    let (fit, theta) = re_from_design(&design, &ids, sigma_u2, sigma_e2, &index.unit, &spec.vce)?;
    Ok(ReFit { fit, theta, sigma_u: sigma_u2.sqrt(), sigma_e: sigma_e2.sqrt(), clipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HausmanTest {
    pub h: f64,
    pub df: usize,
    pub p: f64,
    pub names: Vec<String>,
}

/// `H = d'(V_FE - V_RE)⁺ d` over the coefficients both fits share
/// (the intercept excluded), `df = rank(V_FE - V_RE)`.
pub fn hausman_test(fe: &FitResult, re: &FitResult) -> Result<HausmanTest> {
    let common: Vec<(usize, usize)> = fe
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.as_str() != INTERCEPT)
        .filter_map(|(i, n)| re.index_of(n).map(|j| (i, j)))
        .collect();
    if common.is_empty() {
        return Err(Error::NoCommonCoefficients);
    }
    let m = common.len();
    let d: Vec<f64> = common.iter().map(|&(i, j)| fe.coef[i] - re.coef[j]).collect();
    let mut diff = Matrix::zeros(m, m);
    for (a, &(ia, ja)) in common.iter().enumerate() {
        for (b, &(ib, jb)) in common.iter().enumerate() {
            diff[(a, b)] = fe.vcov[(ia, ib)] - re.vcov[(ja, jb)];
        }
    }
    let (pinv, rank) = psd_pinv(&diff)?;
    let h = dot(&d, &pinv.matvec(&d)?).max(0.0);
    let p = if rank == 0 { 1.0 } else { chi2_sf(h, rank as f64) };
    Ok(HausmanTest { h, df: rank, p, names: common.iter().map(|&(i, _)| fe.names[i].clone()).collect() })
}
