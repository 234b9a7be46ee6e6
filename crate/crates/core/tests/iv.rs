mod common;

use common::*;
use hedonic_core::eval::{simulate_market, MarketDGP};
use hedonic_core::iv::{fit_2sls, fit_sar_gs2sls, weak_iv_test, IvSpec, IvStrength, STOCK_YOGO_1X1};
use hedonic_core::regress::{fit_ols, ModelSpec};
use hedonic_core::spatial::{build_weights, SpatialWeightMatrix};
use hedonic_core::Error;

struct Fixture {
    x: Vec<f64>,
    w: Vec<f64>,
    z: Vec<f64>,
    z2: Vec<f64>,
    y: Vec<f64>,
}

fn fixture(seed: u64, n: usize, strength: f64) -> Fixture {
    let mut r = rng(seed);
    let mut f = Fixture { x: vec![], w: vec![], z: vec![], z2: vec![], y: vec![] };
    for _ in 0..n {
        let z = normal(&mut r);
        let z2 = normal(&mut r);
        let w = normal(&mut r);
        let v = normal(&mut r);
        let e = 0.6 * v + 0.8 * normal(&mut r);
        let x = strength * z + 0.3 * z2 + 0.5 * w + v;
        f.y.push(1.0 + 2.0 * x - w + e);
        f.x.push(x);
        f.w.push(w);
        f.z.push(z);
        f.z2.push(z2);
    }
    f
}

fn fixture_dataset(f: &Fixture) -> hedonic_core::PropertyDataset {
    dataset(
        f.y.len(),
        &[
            ("x", f.x.clone()),
            ("xcopy", f.x.clone()),
            ("w", f.w.clone()),
            ("z", f.z.clone()),
            ("z2", f.z2.clone()),
            ("y", f.y.clone()),
        ],
    )
}

#[test]
fn regressor_as_own_instrument_is_ols() {
    let f = fixture(1, 100, 1.0);
    let ds = fixture_dataset(&f);
    let iv = fit_2sls(&ds, &IvSpec::new("y", &["x"], &["xcopy"], &["w"])).unwrap();
    let ols = fit_ols(&ds, &ModelSpec::new("y", &["x", "w"])).unwrap();
    assert_eq!(iv.names, ols.names);
    for j in 0..3 {
        assert!((iv.coef[j] - ols.coef[j]).abs() < 1e-10);
        assert!((iv.se[j] - ols.se[j]).abs() < 1e-10);
    }
}

#[test]
fn exactly_identified_matches_literal_two_stages() {
    let f = fixture(2, 150, 0.8);
    let ds = fixture_dataset(&f);
    let iv = fit_2sls(&ds, &IvSpec::new("y", &["x"], &["z"], &["w"])).unwrap();
    let n = f.y.len();
    let ones = vec![1.0; n];
    let first = ols_oracle(&[f.z.clone(), f.w.clone(), ones.clone()], &f.x);
    let xhat: Vec<f64> = (0..n).map(|i| first[0] * f.z[i] + first[1] * f.w[i] + first[2]).collect();
    let second = ols_oracle(&[xhat, f.w.clone(), ones], &f.y);
    for j in 0..3 {
        assert!((iv.coef[j] - second[j]).abs() < 1e-9);
    }
    // structural residuals use x, not x̂
    let u: Vec<f64> = (0..n).map(|i| f.y[i] - second[0] * f.x[i] - second[1] * f.w[i] - second[2]).collect();
    let ssr: f64 = u.iter().map(|v| v * v).sum();
    assert!((iv.ssr - ssr).abs() < 1e-8);
}

#[test]
fn underidentified_and_missing_instruments() {
    let f = fixture(3, 50, 1.0);
    let ds = fixture_dataset(&f);
    assert!(matches!(fit_2sls(&ds, &IvSpec::new("y", &["x", "w"], &["z"], &[])), Err(Error::Underidentified(_))));
    assert!(matches!(weak_iv_test(&ds, &IvSpec::new("y", &["x"], &[], &["w"])), Err(Error::ZeroInstruments)));
}

fn first_stage_partial_f(f: &Fixture, two: bool) -> f64 {
    let n = f.y.len();
    let ones = vec![1.0; n];
    let ssr = |cols: &[Vec<f64>]| {
        let b = ols_oracle(cols, &f.x);
        (0..n).map(|i| f.x[i] - cols.iter().zip(&b).map(|(c, bj)| c[i] * bj).sum::<f64>()).map(|u| u * u).sum::<f64>()
    };
    let restricted = ssr(&[f.w.clone(), ones.clone()]);
    let (full, l) = if two {
        (ssr(&[f.z.clone(), f.z2.clone(), f.w.clone(), ones]), 2.0)
    } else {
        (ssr(&[f.z.clone(), f.w.clone(), ones]), 1.0)
    };
    let k = if two { 4.0 } else { 3.0 };
    ((restricted - full) / l) / (full / (n as f64 - k))
}

#[test]
fn minimum_eigenvalue_equals_partial_f() {
    for seed in 0..20 {
        let f = fixture(100 + seed, 80 + seed as usize, 0.1 + 0.05 * seed as f64);
        let ds = fixture_dataset(&f);
        let two = seed % 2 == 0;
        let inst: &[&str] = if two { &["z", "z2"] } else { &["z"] };
        let rep = weak_iv_test(&ds, &IvSpec::new("y", &["x"], inst, &["w"])).unwrap();
        let oracle = first_stage_partial_f(&f, two);
        assert!((rep.stat - oracle).abs() < 1e-8 * oracle.max(1.0), "seed {seed}: {} vs {oracle}", rep.stat);
        if !two {
            let cvs: Vec<f64> = rep.critical_values.iter().map(|c| c.value).collect();
            assert_eq!(cvs, vec![16.38, 8.96, 6.66, 5.53]);
            let expected = if rep.stat > 16.38 { IvStrength::Strong } else { IvStrength::Weak };
            assert_eq!(rep.conclusion, Some(expected));
        } else {
            assert!(rep.critical_values.is_empty());
            assert_eq!(rep.conclusion, None);
        }
    }
    assert_eq!(STOCK_YOGO_1X1.len(), 4);
}

#[test]
fn gs2sls_without_neighbours_falls_back_to_2sls() {
    let f = fixture(5, 60, 1.0);
    let ds = fixture_dataset(&f);
    let spec = IvSpec::new("y", &["x"], &["z"], &["w"]);
    let sar = fit_sar_gs2sls(&ds, &spec, &SpatialWeightMatrix::zeros(60)).unwrap();
    let iv = fit_2sls(&ds, &spec).unwrap();
    assert!(!sar.lambda_identified);
    assert_eq!(sar.lambda, 0.0);
    for (a, b) in sar.fit.coef.iter().zip(&iv.coef) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gs2sls_recovers_lag_on_simulated_market() {
    let dgp = MarketDGP { lambda: 0.4, n: 400, ..MarketDGP::default() };
    let m = simulate_market(&dgp).unwrap();
    let spec = IvSpec::new("lnprice", &[], &[], &["lnsqft", "beds", "baths", "lndist_pch", "stories", "condo"]);
    let sar = fit_sar_gs2sls(&m.dataset, &spec, &m.weights).unwrap();
    assert!(sar.lambda_identified && !sar.lambda_out_of_range);
    assert!((sar.lambda - 0.4).abs() < 4.0 * sar.lambda_se, "lambda {} se {}", sar.lambda, sar.lambda_se);
    assert_eq!(sar.fit.names[0], "lambda");
    assert!(sar.pseudo_r2 > 0.0 && sar.pseudo_r2 <= 1.0);
}

#[test]
fn gs2sls_rejects_wrong_size_and_subsets_weights() {
    let f = fixture(6, 40, 1.0);
    let mut ds = fixture_dataset(&f);
    let coords: Vec<[f64; 2]> = (0..40).map(|i| [i as f64, (i % 3) as f64]).collect();
    let w = build_weights(&coords, 2.5, true).unwrap();
    let spec = IvSpec::new("y", &[], &[], &["x", "w"]);
    assert!(matches!(
        fit_sar_gs2sls(&ds.select_rows(&[0, 1, 2]), &spec, &w),
        Err(Error::DimensionMismatch(_))
    ));
    let mut y = f.y.clone();
    y[5] = f64::NAN;
    ds.set_column("y", y).unwrap();
    let sar = fit_sar_gs2sls(&ds, &spec, &w).unwrap();
    assert_eq!(sar.fit.n, 39);
}
