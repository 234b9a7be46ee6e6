mod common;

use common::*;
use hedonic_core::discrete::{
    classification_table, fit_binary, lr_test, marginal_effects, Link, GRADIENT_TOL,
};
use hedonic_core::regress::ModelSpec;
use hedonic_core::Error;
use rand::Rng;

fn binary_fixture(seed: u64, n: usize, link: Link) -> hedonic_core::PropertyDataset {
    let mut r = rng(seed);
    let x1: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let x2: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 2.0).collect();
    let noise: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = -0.5 + 1.2 * x1[i] - 0.7 * x2[i];
            let p = link.cdf(eta);
            f64::from(r.random::<f64>() < p)
        })
        .collect();
    dataset(n, &[("x1", x1), ("x2", x2), ("noise", noise), ("d", y)])
}

#[test]
fn logit_gradient_converges() {
    for link in [Link::Logit, Link::Probit] {
        let ds = binary_fixture(1, 400, link);
        let fit = fit_binary(&ds, &ModelSpec::new("d", &["x1", "x2"]), link).unwrap();
        assert!(fit.converged);
        assert!(fit.gradient_max <= GRADIENT_TOL);
        assert!((fit.coefficient("x1").unwrap() - 1.2).abs() < 0.4);
        assert!(fit.pseudo_r2 > 0.0 && fit.pseudo_r2 < 1.0);
        assert_eq!(fit.lr_df, 2);
    }
}

#[test]
fn marginal_effects_match_finite_differences() {
    for link in [Link::Logit, Link::Probit] {
        let ds = binary_fixture(2, 300, link);
        let fit = fit_binary(&ds, &ModelSpec::new("d", &["x1", "x2"]), link).unwrap();
        let me = marginal_effects(&fit, None).unwrap();
        assert_eq!(me.len(), 2);
        let h = 1e-6;
        for (j, m) in me.iter().enumerate() {
            let mut up = fit.means.clone();
            let mut down = fit.means.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (fit.predict(&up) - fit.predict(&down)) / (2.0 * h);
            assert!((m.effect - fd).abs() < 1e-6, "{}: {} vs {fd}", m.name, m.effect);
        }
    }
}

#[test]
fn information_matrix_inverse_matches_numeric_hessian() {
    let ds = binary_fixture(3, 250, Link::Logit);
    let fit = fit_binary(&ds, &ModelSpec::new("d", &["x1"]), Link::Logit).unwrap();
    let x1 = ds.column("x1").unwrap();
    let d = ds.column("d").unwrap();
    let ll = |b: &[f64]| -> f64 {
        x1.iter()
            .zip(&d)
            .map(|(x, y)| {
                let p = 1.0 / (1.0 + (-(b[0] * x + b[1])).exp());
                y * p.ln() + (1.0 - y) * (1.0 - p).ln()
            })
            .sum()
    };
    assert!((ll(&fit.coef) - fit.loglik).abs() < 1e-9);
    let h = 1e-4;
    let mut hess = vec![vec![0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let at = |da: f64, db: f64| {
                let mut v = fit.coef.clone();
                v[a] += da;
                v[b] += db;
                ll(&v)
            };
            hess[a][b] = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
        }
    }
    let neg: Vec<Vec<f64>> = hess.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let inv = inverse(&neg);
    for a in 0..2 {
        assert!((fit.vcov[(a, a)] - inv[a][a]).abs() < 1e-5 * inv[a][a]);
    }
}

#[test]
fn lr_test_nested_models() {
    let ds = binary_fixture(4, 300, Link::Logit);
    let full = fit_binary(&ds, &ModelSpec::new("d", &["x1", "x2", "noise"]), Link::Logit).unwrap();
    let small = fit_binary(&ds, &ModelSpec::new("d", &["x1", "x2"]), Link::Logit).unwrap();
    let t = lr_test(&full, &small).unwrap();
    assert_eq!(t.df, 1);
    assert!((t.chi2 - 2.0 * (full.loglik - small.loglik)).abs() < 1e-12);
    assert!(matches!(lr_test(&small, &full), Err(Error::NotNested(_))));
    let other = fit_binary(&ds.select_rows(&(0..200).collect::<Vec<_>>()), &ModelSpec::new("d", &["x1"]), Link::Logit)
        .unwrap();
    assert!(matches!(lr_test(&full, &other), Err(Error::NotNested(_))));
}

#[test]
fn classification_from_fit() {
    let ds = binary_fixture(5, 300, Link::Logit);
    let fit = fit_binary(&ds, &ModelSpec::new("d", &["x1", "x2"]), Link::Logit).unwrap();
    let c = classification_table(&fit.probabilities, &fit.actual, 0.5).unwrap();
    assert_eq!(c.table.n(), 300);
    let acc = (c.table.tp + c.table.tn) as f64 / 300.0;
    assert_eq!(c.metrics.accuracy, Some(acc));
    let pos = fit.actual.iter().filter(|&&v| v == 1.0).count();
    assert_eq!(c.table.tp + c.table.fn_, pos);
}

#[test]
fn response_must_be_binary() {
    let ds = dataset(4, &[("d", vec![0.0, 1.0, 2.0, 1.0]), ("x", vec![1.0, 2.0, 3.0, 5.0])]);
    assert!(matches!(
        fit_binary(&ds, &ModelSpec::new("d", &["x"]), Link::Logit),
        Err(Error::InvalidArgument(_))
    ));
}
