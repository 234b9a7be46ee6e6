#![allow(dead_code)]

use hedonic_core::dataset::{PropertyDataset, PropertyRecord, Style};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn record(i: usize) -> PropertyRecord {
    PropertyRecord {
        house_id: i as u32 + 1,
        price: 1_000_000.0 + i as f64,
        sqft: 1500.0 + i as f64,
        lot_sqft: 4000.0,
        beds: 3.0,
        baths: 2.0,
        stories: 1.0,
        parking: 2.0,
        style: Style::SingleFamily,
        zipcode: 92629,
        year_built: 1980,
        latitude: 33.45 + 1e-4 * i as f64,
        longitude: -117.70 - 1e-4 * (i % 7) as f64,
        sale_year: 2022,
        sale_month: 1 + (i % 12) as u32,
        address: format!("{i} Test St"),
    }
}

/// Dataset of `n` placeholder records carrying the given derived columns.
pub fn dataset(n: usize, columns: &[(&str, Vec<f64>)]) -> PropertyDataset {
    let (mut ds, _) = PropertyDataset::new((0..n).map(record).collect()).unwrap();
    for (name, values) in columns {
        ds.set_column(name, values.clone()).unwrap();
    }
    ds
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle side free of the library's samplers
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Dense Gauss-Jordan solve with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

/// Inverse by solving against unit vectors.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| solve(a, &(0..n).map(|i| f64::from(i == j)).collect::<Vec<_>>()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// `X'X` and `X'y` for column-stored `x`.
pub fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let xtx = cols.iter().map(|a| cols.iter().map(|b| dot(a, b)).collect()).collect();
    let xty = cols.iter().map(|a| dot(a, y)).collect();
    (xtx, xty)
}

pub fn ols_oracle(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let (a, b) = normal_equations(cols, y);
    solve(&a, &b)
}

pub fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}
