//! Turning dataset columns into response vectors and design matrices.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dataset::{indicator_columns, PropertyDataset};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};

pub const INTERCEPT: &str = "_cons";

/// Expands regressor tokens into named columns. `i.<col>` becomes one
/// indicator per non-base level of `<col>`.
pub fn resolve_columns(ds: &PropertyDataset, tokens: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for token in tokens {
        if let Some(col) = token.strip_prefix("i.") {
            out.extend(indicator_columns(ds, col)?);
        } else {
            out.push((token.clone(), ds.column(token)?));
        }
    }
    Ok(out)
}

/// Response, design and the original row numbers kept after listwise deletion.
#[derive(Debug, Clone)]
pub struct Design {
    pub response: String,
    pub y: Vec<f64>,
    pub x: Matrix,
    pub names: Vec<String>,
    pub rows: Vec<usize>,
    /// Auxiliary columns (grouping variables) restricted to `rows`.
    pub aux: BTreeMap<String, Vec<f64>>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn has_intercept(&self) -> bool {
        self.names.iter().any(|n| n == INTERCEPT)
    }
}

/// Builds `y` and `X` from the dataset. The intercept, when requested, is
/// the last column. Rows with a missing value in any involved column
/// (including `aux`) are dropped.
pub fn build_design(
    ds: &PropertyDataset,
    response: &str,
    regressors: &[String],
    intercept: bool,
    aux: &[&str],
) -> Result<Design> {
    if regressors.iter().any(|r| r == response) {
        return Err(Error::InvalidArgument(alloc::format!("response `{response}` is also a regressor")));
    }
    let y_all = ds.column(response)?;
    let cols = resolve_columns(ds, regressors)?;
    let aux_cols: Vec<(String, Vec<f64>)> =
        aux.iter().map(|a| Ok((a.to_string(), ds.column(a)?))).collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..ds.len())
        .filter(|&i| {
            !y_all[i].is_nan() && cols.iter().all(|(_, c)| !c[i].is_nan()) && aux_cols.iter().all(|(_, c)| !c[i].is_nan())
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|&i| y_all[i]).collect();
    let mut columns: Vec<Vec<f64>> = cols.iter().map(|(_, c)| rows.iter().map(|&i| c[i]).collect()).collect();
    let mut names: Vec<String> = cols.into_iter().map(|(n, _)| n).collect();
    if intercept {
        columns.push(alloc::vec![1.0; rows.len()]);
        names.push(INTERCEPT.to_string());
    }
    let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
    let x = if refs.is_empty() { Matrix::zeros(rows.len(), 0) } else { Matrix::from_columns(&refs)? };
    let aux = aux_cols.into_iter().map(|(n, c)| (n, rows.iter().map(|&i| c[i]).collect())).collect();
    Ok(Design { response: response.to_string(), y, x, names, rows, aux })
}

/// Maps arbitrary group codes to `0..G` in order of first appearance.
pub fn group_ids(values: &[f64]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<u64, usize> = BTreeMap::new();
    let ids = values
        .iter()
        .map(|v| {
            // +0.0 and -0.0 are the same group
            let key = if *v == 0.0 { 0u64 } else { v.to_bits() };
            let next = map.len();
            *map.entry(key).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

/// QR of `x` after checking full column rank; on failure reports the first
/// dependent column together with the earlier columns it is built from.
pub fn checked_qr(x: &Matrix, names: &[String]) -> Result<Qr> {
    if x.rows() < x.cols() {
        return Err(Error::InsufficientObservations { n: x.rows(), params: x.cols() });
    }
    let qr = Qr::new(x);
    if let Some(&j) = qr.dependent_columns().first() {
        let coefs = qr.dependence_of(j);
        let scale = coefs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut set: Vec<String> = coefs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-8 * scale.max(1.0))
            .map(|(i, _)| names[i].clone())
            .collect();
        set.push(names[j].clone());
        return Err(Error::Collinear(set));
    }
    Ok(qr)
}

/// Indices of a maximal set of linearly independent columns, keeping the
/// earliest columns when there is a choice.
pub fn independent_columns(x: &Matrix) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..x.cols()).collect();
    loop {
        let qr = Qr::new(&x.select_columns(&keep));
        let dep = qr.dependent_columns();
        match dep.first() {
            None => return keep,
            Some(&j) => {
                keep.remove(j);
            }
        }
        if keep.is_empty() {
            return keep;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_ids_first_appearance() {
        let (ids, g) = group_ids(&[3.0, 1.0, 3.0, 2.0, -0.0, 0.0]);
        assert_eq!(ids, alloc::vec![0, 1, 0, 2, 3, 3]);
        assert_eq!(g, 4);
    }

    #[test]
    fn independent_columns_drops_duplicates() {
        let a = [1.0, 2.0, 3.0];
        let z = [0.0, 0.0, 0.0];
        let x = Matrix::from_columns(&[&a, &z, &a, &[1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(independent_columns(&x), alloc::vec![0, 3]);
    }
}
