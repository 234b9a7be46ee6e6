use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use super::{fit_design, gaussian_loglik, ols_core, FitResult, Vce};
use crate::dataset::PropertyDataset;
use crate::design::{build_design, Design};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Power set searched by degree-2 fractional polynomials; 0 stands for `ln`.
pub const FP_POWERS: [f64; 8] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracPolyCandidate {
    pub powers: Vec<f64>,
    /// `None` when the basis was collinear with the covariates.
    pub deviance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracPolyResult {
    pub focus: String,
    pub scale: f64,
    pub powers: Vec<f64>,
    pub deviance: f64,
    pub fit: FitResult,
    pub candidates: Vec<FracPolyCandidate>,
}

/// The 8 single powers, then the 28 distinct pairs, then the 8 repeated pairs.
pub fn fracpoly_candidates() -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = FP_POWERS.iter().map(|&p| alloc::vec![p]).collect();
    for (i, &p) in FP_POWERS.iter().enumerate() {
        for &q in &FP_POWERS[i + 1..] {
            out.push(alloc::vec![p, q]);
        }
    }
    out.extend(FP_POWERS.iter().map(|&p| alloc::vec![p, p]));
    out
}

fn power(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        x.ln()
    } else {
        x.powf(p)
    }
}

/// Basis columns for a power vector; a repeated power multiplies the
/// previous term by `ln x`.
pub fn fp_basis(x: &[f64], powers: &[f64]) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(powers.len());
    for (j, &p) in powers.iter().enumerate() {
        let col = if j > 0 && powers[j - 1] == p {
            cols[j - 1].iter().zip(x).map(|(prev, &v)| prev * v.ln()).collect()
        } else {
            x.iter().map(|&v| power(v, p)).collect()
        };
        cols.push(col);
    }
    cols
}

fn design_with_basis(base: &Design, basis: &[Vec<f64>], focus: &str) -> Result<Design> {
    let mut columns: Vec<Vec<f64>> = basis.to_vec();
    columns.extend(base.x.columns());
    let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
    let mut names: Vec<String> = (1..=basis.len()).map(|i| format!("{focus}__{i}")).collect();
    names.extend(base.names.iter().cloned());
    Ok(Design {
        response: base.response.clone(),
        y: base.y.clone(),
        x: Matrix::from_columns(&refs)?,
        names,
        rows: base.rows.clone(),
        aux: base.aux.clone(),
    })
}

/// Searches all 44 degree-1 and degree-2 fractional polynomial bases in
/// `focus / scale` and returns the minimum-deviance model.
pub fn fracpoly_search(
    ds: &PropertyDataset,
    response: &str,
    focus: &str,
    covariates: &[String],
    scale: f64,
) -> Result<FracPolyResult> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let base = build_design(ds, response, covariates, true, &[focus])?;
    let x: Vec<f64> = base.aux[focus].iter().map(|v| v / scale).collect();
    if let Some(row) = x.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::LogDomain { row: base.rows[row], column: focus.into(), value: x[row] * scale });
    }
    let n = base.n();
    let mut candidates = Vec::with_capacity(44);
    let mut best: Option<(usize, f64)> = None;
    for (idx, powers) in fracpoly_candidates().into_iter().enumerate() {
        let design = design_with_basis(&base, &fp_basis(&x, &powers), focus)?;
        let deviance = ols_core(&design.y, &design.x, &design.names)
            .ok()
            .map(|core| -2.0 * gaussian_loglik(core.ssr, n))
            .filter(|d| d.is_finite());
        if let Some(d) = deviance {
            if best.map_or(true, |(_, b)| d < b) {
                best = Some((idx, d));
            }
        }
        candidates.push(FracPolyCandidate { powers, deviance });
    }
    let (idx, deviance) = best.ok_or_else(|| Error::Collinear(alloc::vec![focus.into()]))?;
    let powers = candidates[idx].powers.clone();
    let design = design_with_basis(&base, &fp_basis(&x, &powers), focus)?;
    let fit = fit_design(&design, &Vce::Classical, None, "fracpoly")?;
    Ok(FracPolyResult { focus: focus.into(), scale, powers, deviance, fit, candidates })
}
