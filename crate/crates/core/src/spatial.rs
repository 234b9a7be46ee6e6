//! Geographic structure: distances, k-means and agglomerative clustering,
//! inverse-distance weight matrices, and one-way ANOVA / Bartlett tests for
//! checking whether clusters separate an outcome.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::dist::{chi2_sf, f_sf};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const EARTH_RADIUS_KM: f64 = 6371.0088;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Plain Euclidean distance on (latitude, longitude), in degrees.
    #[default]
    DegreeEuclidean,
    /// Great-circle distance in kilometres.
    HaversineKm,
}

/// Distance between two (latitude, longitude) points.
pub fn point_distance(p: [f64; 2], reference: [f64; 2], metric: DistanceMetric) -> f64 {
    match metric {
        DistanceMetric::DegreeEuclidean => {
            let dlat = p[0] - reference[0];
            let dlon = p[1] - reference[1];
            (dlat * dlat + dlon * dlon).sqrt()
        }
        DistanceMetric::HaversineKm => {
            let (lat1, lat2) = (p[0].to_radians(), reference[0].to_radians());
            let dlat = lat2 - lat1;
            let dlon = (reference[1] - p[1]).to_radians();
            let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
            2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
        }
    }
}

#[inline]
fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    d0 * d0 + d1 * d1
}

fn distinct_points(coords: &[[f64; 2]]) -> usize {
    let mut keys: Vec<(u64, u64)> = coords.iter().map(|p| ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits())).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Flat clustering: labels run from 1 to `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Per-cluster coordinate means (empty when built without coordinates).
    pub centroids: Vec<[f64; 2]>,
    pub within_ss: Option<f64>,
    /// k-means only: within-cluster sum of squares after each Lloyd pass.
    pub history: Vec<f64>,
}

impl ClusterAssignment {
    /// Labels (any values) renumbered to 1..k by first appearance.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let labels = raw
            .iter()
            .map(|&r| match map.iter().find(|(from, _)| *from == r) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len() + 1;
                    map.push((r, to));
                    to
                }
            })
            .collect();
        Self { labels, k: map.len(), centroids: Vec::new(), within_ss: None, history: Vec::new() }
    }

    /// Fills centroids and the within-cluster sum of squares.
    pub fn with_geometry(mut self, coords: &[[f64; 2]]) -> Self {
        let (centroids, _) = centroids_of(coords, &self.labels, self.k);
        self.within_ss = Some(within_ss(coords, &self.labels, &centroids));
        self.centroids = centroids;
        self
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l - 1] += 1;
        }
        s
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }
}

fn centroids_of(coords: &[[f64; 2]], labels: &[usize], k: usize) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut sums = vec![[0.0; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in coords.iter().zip(labels) {
        sums[l - 1][0] += p[0];
        sums[l - 1][1] += p[1];
        counts[l - 1] += 1;
    }
    let cents = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { [s[0] / c as f64, s[1] / c as f64] } else { [f64::NAN; 2] })
        .collect();
    (cents, counts)
}

fn within_ss(coords: &[[f64; 2]], labels: &[usize], centroids: &[[f64; 2]]) -> f64 {
    coords.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l - 1])).sum()
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cent) in centroids.iter().enumerate() {
        let d = sq_dist(p, cent);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd's k-means with seeded farthest-point initialization.
///
/// The first centre is a uniformly drawn observation; each further centre is
/// the observation farthest from its nearest chosen centre. Equidistant
/// points go to the lowest-index centroid. An emptied cluster is reseeded
/// with the point farthest from its own centroid.
pub fn kmeans(coords: &[[f64; 2]], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = coords.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let distinct = distinct_points(coords);
    if k > distinct {
        return Err(Error::InfeasibleClusters { k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(coords[rng.random_range(0..n)]);
    let mut min_d: Vec<f64> = coords.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let (far, _) = min_d
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &d)| if d > bd { (i, d) } else { (bi, bd) });
        let c = coords[far];
        centroids.push(c);
        for (m, p) in min_d.iter_mut().zip(coords) {
            *m = m.min(sq_dist(p, &c));
        }
    }

    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    for iter in 0..KMEANS_MAX_ITER {
        let mut next: Vec<usize> = coords.iter().map(|p| nearest(p, &centroids) + 1).collect();
        let mut counts = vec![0usize; k];
        for &l in &next {
            counts[l - 1] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let (far, _) = coords.iter().enumerate().filter(|(i, _)| counts[next[*i] - 1] > 1).fold(
                (usize::MAX, f64::NEG_INFINITY),
                |(bi, bd), (i, p)| {
                    let d = sq_dist(p, &centroids[next[i] - 1]);
                    if d > bd {
                        (i, d)
                    } else {
                        (bi, bd)
                    }
                },
            );
            counts[next[far] - 1] -= 1;
            next[far] = empty + 1;
            counts[empty] = 1;
        }
        let changed = iter == 0 || next != labels;
        labels = next;
        centroids = centroids_of(coords, &labels, k).0;
        history.push(within_ss(coords, &labels, &centroids));
        if !changed {
            break;
        }
    }

    // relabel by first appearance so the output is canonical
    let relabeled = ClusterAssignment::from_labels(&labels);
    let mut perm = vec![0usize; k];
    for (old, new) in labels.iter().zip(&relabeled.labels) {
        perm[new - 1] = *old - 1;
    }
    let centroids: Vec<[f64; 2]> = perm.iter().map(|&o| centroids[o]).collect();
    let wss = *history.last().unwrap_or(&0.0);
    Ok(ClusterAssignment { labels: relabeled.labels, k, centroids, within_ss: Some(wss), history })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Ward,
    Complete,
}

/// One agglomeration step. Leaves are nodes `0..n`; merge `m` creates node `n + m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

/// Agglomerative clustering with Lance-Williams updates.
///
/// Complete linkage works on Euclidean distances. Ward works on squared
/// Euclidean distances and reports `sqrt` of the merge criterion as the
/// height, so two singletons merge at their Euclidean distance.
pub fn hclust(coords: &[[f64; 2]], linkage: Linkage) -> Result<Dendrogram> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::InsufficientObservations { n, params: 2 });
    }
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let sq = sq_dist(&coords[i], &coords[j]);
            let v = match linkage {
                Linkage::Ward => sq,
                Linkage::Complete => sq.sqrt(),
            };
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..(n - 1) {
        let (mut bi, mut bj, mut best) = (0, 0, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let row = &d[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                if active[j] && row[j] < best {
                    best = row[j];
                    bi = i;
                    bj = j;
                }
            }
        }
        let (ni, nj) = (size[bi] as f64, size[bj] as f64);
        for k in 0..n {
            if !active[k] || k == bi || k == bj {
                continue;
            }
            let (dki, dkj) = (d[k * n + bi], d[k * n + bj]);
            let updated = match linkage {
                Linkage::Complete => dki.max(dkj),
                Linkage::Ward => {
                    let nk = size[k] as f64;
                    ((ni + nk) * dki + (nj + nk) * dkj - nk * best) / (ni + nj + nk)
                }
            };
            d[k * n + bi] = updated;
            d[bi * n + k] = updated;
        }
        let height = match linkage {
            Linkage::Complete => best,
            Linkage::Ward => best.max(0.0).sqrt(),
        };
        let (a, b) = (node[bi], node[bj]);
        merges.push(Merge { left: a.min(b), right: a.max(b), height, size: size[bi] + size[bj] });
        size[bi] += size[bj];
        active[bj] = false;
        node[bi] = n + step;
    }
    Ok(Dendrogram { n, linkage, merges })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Flat clusters obtained by undoing the last `groups - 1` merges.
pub fn cut_dendrogram(d: &Dendrogram, groups: usize) -> Result<ClusterAssignment> {
    if groups == 0 || groups > d.n {
        return Err(Error::InvalidArgument(format!("groups must be in 1..={}, got {groups}", d.n)));
    }
    let n = d.n;
    let mut parent: Vec<usize> = (0..(2 * n - 1)).collect();
    for (m, merge) in d.merges.iter().take(n - groups).enumerate() {
        let node = n + m;
        let a = find(&mut parent, merge.left);
        let b = find(&mut parent, merge.right);
        parent[a] = node;
        parent[b] = node;
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Ok(ClusterAssignment::from_labels(&roots))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeightMatrix {
    pub weights: Matrix,
    pub row_standardized: bool,
    pub cutoff: f64,
    /// Rows with no neighbour inside the cutoff.
    pub isolated: Vec<usize>,
}

impl SpatialWeightMatrix {
    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn zeros(n: usize) -> Self {
        Self { weights: Matrix::zeros(n, n), row_standardized: true, cutoff: 0.0, isolated: (0..n).collect() }
    }

    /// `W v`.
    pub fn lag(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.weights.matvec(v)
    }

    pub fn lag_matrix(&self, m: &Matrix) -> Result<Matrix> {
        self.weights.matmul(m)
    }

    /// Restriction to a subset of observations, re-standardized when the
    /// original was.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut w = self.weights.select_rows(rows).select_columns(rows);
        let isolated = if self.row_standardized { standardize_rows(&mut w) } else { zero_rows(&w) };
        Self { weights: w, row_standardized: self.row_standardized, cutoff: self.cutoff, isolated }
    }

    /// Every row sums to 1 or is entirely zero.
    pub fn is_row_standardized(&self) -> bool {
        (0..self.n()).all(|i| {
            let s: f64 = self.weights.row(i).iter().sum();
            s == 0.0 || (s - 1.0).abs() <= 1e-12
        })
    }
}

fn zero_rows(w: &Matrix) -> Vec<usize> {
    (0..w.rows()).filter(|&i| w.row(i).iter().all(|v| *v == 0.0)).collect()
}

fn standardize_rows(w: &mut Matrix) -> Vec<usize> {
    let mut isolated = Vec::new();
    for i in 0..w.rows() {
        let row = w.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            isolated.push(i);
        }
    }
    isolated
}

/// Median of all pairwise Euclidean distances (the default weights cutoff).
pub fn median_pairwise_distance(coords: &[[f64; 2]]) -> f64 {
    let n = coords.len();
    let mut d: Vec<f64> = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(&coords[i], &coords[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Inverse-distance weights `1/d_ij` for `0 < d_ij <= cutoff`.
pub fn build_weights(coords: &[[f64; 2]], cutoff: f64, standardize: bool) -> Result<SpatialWeightMatrix> {
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff must be positive, got {cutoff}")));
    }
    let n = coords.len();
    let mut w = Matrix::zeros(n, n);
    let mut coincident = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dij = sq_dist(&coords[i], &coords[j]).sqrt();
            if dij == 0.0 {
                coincident.push((i, j));
            } else if dij <= cutoff {
                w[(i, j)] = 1.0 / dij;
                w[(j, i)] = 1.0 / dij;
            }
        }
    }
    if !coincident.is_empty() {
        return Err(Error::CoincidentPoints { pairs: coincident });
    }
    let isolated = if standardize { standardize_rows(&mut w) } else { zero_rows(&w) };
    Ok(SpatialWeightMatrix { weights: w, row_standardized: standardize, cutoff, isolated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub ss_between: f64,
    pub ss_within: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ms_between: f64,
    pub ms_within: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bartlett {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

/// F statistic and p-value from the ANOVA sums of squares.
pub fn anova_from_sums(ss_between: f64, df_between: usize, ss_within: f64, df_within: usize) -> Anova {
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let f = ms_between / ms_within;
    let p = f_sf(f, df_between as f64, df_within as f64);
    Anova { ss_between, ss_within, df_between, df_within, ms_between, ms_within, f, p }
}

struct GroupMoments {
    n: Vec<usize>,
    mean: Vec<f64>,
    ss: Vec<f64>,
}

fn group_moments(values: &[f64], groups: &ClusterAssignment) -> Result<GroupMoments> {
    if values.len() != groups.labels.len() {
        return Err(Error::DimensionMismatch("values and labels differ in length".into()));
    }
    let k = groups.k;
    let mut n = vec![0usize; k];
    let mut sum = vec![0.0; k];
    for (&v, &l) in values.iter().zip(&groups.labels) {
        n[l - 1] += 1;
        sum[l - 1] += v;
    }
    let mean: Vec<f64> = sum.iter().zip(&n).map(|(s, &c)| s / c as f64).collect();
    let mut ss = vec![0.0; k];
    for (&v, &l) in values.iter().zip(&groups.labels) {
        ss[l - 1] += (v - mean[l - 1]) * (v - mean[l - 1]);
    }
    Ok(GroupMoments { n, mean, ss })
}

pub fn oneway_anova(values: &[f64], groups: &ClusterAssignment) -> Result<Anova> {
    let g = group_moments(values, groups)?;
    let k = groups.k;
    let total = values.len();
    if k < 2 {
        return Err(Error::InvalidArgument("ANOVA needs at least 2 groups".into()));
    }
    if total <= k {
        return Err(Error::InsufficientObservations { n: total, params: k });
    }
    let grand = values.iter().sum::<f64>() / total as f64;
    let ssb: f64 = g.n.iter().zip(&g.mean).map(|(&c, m)| c as f64 * (m - grand) * (m - grand)).sum();
    let ssw: f64 = g.ss.iter().sum();
    Ok(anova_from_sums(ssb, k - 1, ssw, total - k))
}

/// Bartlett's test of equal variances across groups.
pub fn bartlett_test(values: &[f64], groups: &ClusterAssignment) -> Result<Bartlett> {
    let g = group_moments(values, groups)?;
    let k = groups.k;
    if k < 2 {
        return Err(Error::InvalidArgument("Bartlett's test needs at least 2 groups".into()));
    }
    if let Some(small) = g.n.iter().position(|&c| c < 2) {
        return Err(Error::SmallGroup { group: small + 1 });
    }
    let total: usize = g.n.iter().sum();
    let dfw = (total - k) as f64;
    let pooled = g.ss.iter().sum::<f64>() / dfw;
    let mut weighted_ln = 0.0;
    let mut inv_sum = 0.0;
    for (&c, &ss) in g.n.iter().zip(&g.ss) {
        let dfi = (c - 1) as f64;
        let var = ss / dfi;
        if !(var > 0.0) {
            return Err(Error::InvalidArgument("a group has zero variance".into()));
        }
        weighted_ln += dfi * var.ln();
        inv_sum += 1.0 / dfi;
    }
    let c = 1.0 + (inv_sum - 1.0 / dfw) / (3.0 * (k as f64 - 1.0));
    let chi2 = ((dfw * pooled.ln() - weighted_ln) / c).max(0.0);
    Ok(Bartlett { chi2, df: k - 1, p: chi2_sf(chi2, (k - 1) as f64) })
}

/// One-way ANOVA plus Bartlett's test; Bartlett failures do not hide the F test.
pub fn oneway_anova_bartlett(values: &[f64], groups: &ClusterAssignment) -> Result<(Anova, Result<Bartlett>)> {
    let anova = oneway_anova(values, groups)?;
    Ok((anova, bartlett_test(values, groups)))
}
