use alloc::vec;

use crate::design::group_ids;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn sandwich(bread: &Matrix, meat: &Matrix, scale: f64) -> Result<Matrix> {
    let mut v = bread.matmul(meat)?.matmul(bread)?.scale(scale);
    v.symmetrize();
    Ok(v)
}

/// White's estimator with the `n / df_resid` small-sample factor.
pub fn hc1_vcov(x: &Matrix, resid: &[f64], xtx_inv: &Matrix, df_resid: usize) -> Result<Matrix> {
    let k = x.cols();
    let mut meat = Matrix::zeros(k, k);
    for (i, &u) in resid.iter().enumerate() {
        let row = x.row(i);
        let u2 = u * u;
        for a in 0..k {
            let ra = row[a] * u2;
            for b in 0..k {
                meat[(a, b)] += ra * row[b];
            }
        }
    }
    sandwich(xtx_inv, &meat, x.rows() as f64 / df_resid as f64)
}

/// Cluster-robust sandwich `(X'X)^-1 (Σ_g X_g'u_g u_g'X_g) (X'X)^-1` scaled by
/// `G/(G-1) * (N-1)/(N-K)`. Returns the matrix and the cluster count `G`.
pub fn cluster_robust_vcov(
    x: &Matrix,
    resid: &[f64],
    xtx_inv: &Matrix,
    clusters: &[f64],
    k_params: usize,
) -> Result<(Matrix, usize)> {
    let n = x.rows();
    let k = x.cols();
    if clusters.len() != n || resid.len() != n {
        return Err(Error::DimensionMismatch("cluster labels or residuals do not match the design".into()));
    }
    let (ids, g) = group_ids(clusters);
    if g < 2 {
        return Err(Error::DegenerateClusters(g));
    }
    let mut scores = vec![0.0; g * k];
    for (i, (&id, &u)) in ids.iter().zip(resid).enumerate() {
        let s = &mut scores[id * k..(id + 1) * k];
        for (sj, &xj) in s.iter_mut().zip(x.row(i)) {
            *sj += xj * u;
        }
    }
    let mut meat = Matrix::zeros(k, k);
    for s in scores.chunks_exact(k) {
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += s[a] * s[b];
            }
        }
    }
    let (gf, nf, kf) = (g as f64, n as f64, k_params as f64);
    let c = gf / (gf - 1.0) * (nf - 1.0) / (nf - kf);
    Ok((sandwich(xtx_inv, &meat, c)?, g))
}
