use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;

/// Response and regressors demeaned within groups.
#[derive(Debug, Clone)]
pub struct AbsorbedDesign {
    pub y: Vec<f64>,
    pub x: Matrix,
    pub df_absorbed: usize,
    /// Group means of the response, indexed by group id.
    pub y_means: Vec<f64>,
}

fn group_means(v: &[f64], groups: &[usize], g: usize, counts: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; g];
    for (&x, &id) in v.iter().zip(groups) {
        sums[id] += x;
    }
    sums.iter().zip(counts).map(|(s, &c)| s / c as f64).collect()
}

/// Within-group demeaning of `y` and every column of `x`. `groups` holds ids
/// in `0..G`; the number of groups becomes the absorbed degrees of freedom.
pub fn absorb_transform(y: &[f64], x: &Matrix, groups: &[usize]) -> AbsorbedDesign {
    let g = groups.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; g];
    for &id in groups {
        counts[id] += 1;
    }
    let y_means = group_means(y, groups, g, &counts);
    let y_dm = y.iter().zip(groups).map(|(v, &id)| v - y_means[id]).collect();
    let mut x_dm = x.clone();
    for j in 0..x.cols() {
        let col = x.column(j);
        let means = group_means(&col, groups, g, &counts);
        for (i, &id) in groups.iter().enumerate() {
            x_dm[(i, j)] = col[i] - means[id];
        }
    }
    let df_absorbed = counts.iter().filter(|&&c| c > 0).count();
    AbsorbedDesign { y: y_dm, x: x_dm, df_absorbed, y_means }
}

/// Dataset-level absorption: builds the design for `response ~ regressors`
/// (no intercept) and demeans it within levels of `group`.
pub fn absorb_columns(
    ds: &crate::dataset::PropertyDataset,
    response: &str,
    regressors: &[alloc::string::String],
    group: &str,
) -> crate::Result<(crate::design::Design, AbsorbedDesign)> {
    let design = crate::design::build_design(ds, response, regressors, false, &[group])?;
    let (ids, _) = crate::design::group_ids(&design.aux[group]);
    let absorbed = absorb_transform(&design.y, &design.x, &ids);
    Ok((design, absorbed))
}
