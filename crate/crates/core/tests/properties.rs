mod common;

use common::*;
use hedonic_core::dataset::month_index;
use hedonic_core::discrete::{classification_table, ClassificationMetrics, ConfusionTable};
use hedonic_core::eval::{evaluate_predictions, split_train_test, SplitMethod};
use hedonic_core::linalg::{psd_pinv, Matrix};
use hedonic_core::regress::{fit_ols, ModelSpec};
use hedonic_core::spatial::{build_weights, cut_dendrogram, hclust, kmeans, Linkage};
use proptest::prelude::*;

fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..max)
        .prop_map(|v| v.into_iter().map(|(a, b)| [a, b]).collect())
        .prop_filter("distinct points", |p: &Vec<[f64; 2]>| {
            (0..p.len()).all(|i| (i + 1..p.len()).all(|j| p[i] != p[j]))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rmse_at_least_mae(e in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        let zeros = vec![0.0; e.len()];
        let r = evaluate_predictions(&e, &zeros).unwrap();
        prop_assert!(r.rmse + 1e-12 >= r.mae);
        prop_assert!(r.mae >= 0.0);
    }

    #[test]
    fn metrics_shift_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
        c in -1e3f64..1e3,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let r1 = evaluate_predictions(&a, &p).unwrap();
        let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
        let p2: Vec<f64> = p.iter().map(|v| v + c).collect();
        let r2 = evaluate_predictions(&a2, &p2).unwrap();
        prop_assert!((r1.rmse - r2.rmse).abs() < 1e-9);
        prop_assert!((r1.mae - r2.mae).abs() < 1e-9);
    }

    #[test]
    fn split_is_partition(n in 2usize..500, frac in 0.05f64..0.95, seed in any::<u64>()) {
        if let Ok((train, test)) = split_train_test(n, frac, seed, SplitMethod::Bernoulli) {
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn accuracy_recomputed(tp in 0usize..500, fp in 0usize..500, fn_ in 0usize..500, tn in 0usize..500) {
        prop_assume!(tp + fp + fn_ + tn > 0);
        let m = ClassificationMetrics::from_table(&ConfusionTable { tp, fp, fn_, tn });
        let acc = (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64;
        prop_assert_eq!(m.accuracy, Some(acc));
        if let (Some(s), Some(f)) = (m.sensitivity, m.false_neg_rate_true_pos) {
            prop_assert!((s + f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classification_counts_sum(probs in prop::collection::vec(0.0f64..1.0, 1..80), t in 0.01f64..0.99) {
        let actual: Vec<f64> = probs.iter().enumerate().map(|(i, _)| (i % 2) as f64).collect();
        let c = classification_table(&probs, &actual, t).unwrap();
        prop_assert_eq!(c.table.n(), probs.len());
    }

    #[test]
    fn kmeans_history_non_increasing(pts in points(40), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(k <= pts.len());
        let a = kmeans(&pts, k, seed).unwrap();
        prop_assert!(a.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
        prop_assert_eq!(a.sizes().iter().sum::<usize>(), pts.len());
        prop_assert!(a.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn dendrogram_monotone_and_nested(pts in points(25), ward in any::<bool>()) {
        let linkage = if ward { Linkage::Ward } else { Linkage::Complete };
        let d = hclust(&pts, linkage).unwrap();
        prop_assert!(d.merges.windows(2).all(|w| w[1].height >= w[0].height * (1.0 - 1e-12)));
        let n = pts.len();
        for g in 2..=n {
            let fine = cut_dendrogram(&d, g).unwrap();
            let coarse = cut_dendrogram(&d, g - 1).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if fine.labels[i] == fine.labels[j] {
                        prop_assert_eq!(coarse.labels[i], coarse.labels[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn weights_row_standardized(pts in points(30), cutoff in 1.0f64..80.0) {
        let w = build_weights(&pts, cutoff, true).unwrap();
        prop_assert!(w.is_row_standardized());
        for i in 0..pts.len() {
            prop_assert_eq!(w.weights[(i, i)], 0.0);
            let s: f64 = w.weights.row(i).iter().sum();
            prop_assert_eq!(s == 0.0, w.isolated.contains(&i));
        }
    }

    #[test]
    fn ols_residuals_orthogonal(seed in any::<u64>(), n in 8usize..60) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.3 * x[i] + normal(&mut r)).collect();
        let ds = dataset(n, &[("x", x.clone()), ("y", y)]);
        let fit = fit_ols(&ds, &ModelSpec::new("y", &["x"])).unwrap();
        let s: f64 = fit.residuals.iter().zip(&x).map(|(u, v)| u * v).sum();
        prop_assert!(s.abs() < 1e-9);
        prop_assert!(fit.residuals.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn pinv_quadratic_form_non_negative(vals in prop::collection::vec(-5.0f64..5.0, 9), d in prop::collection::vec(-3.0f64..3.0, 3)) {
        let a = Matrix::from_row_major(3, 3, vals).unwrap();
        let mut s = a.clone();
        s.symmetrize();
        let (p, _) = psd_pinv(&s).unwrap();
        let q: f64 = d.iter().zip(p.matvec(&d).unwrap()).map(|(x, y)| x * y).sum();
        prop_assert!(q >= -1e-9);
    }

    #[test]
    fn month_index_increments(y in 1960i32..2100, m in 1u32..12) {
        prop_assert_eq!(month_index(y, m + 1) - month_index(y, m), 1);
        prop_assert_eq!(month_index(y + 1, 1) - month_index(y, 12), 1);
    }
}

#[test]
fn month_index_reported_endpoints() {
    assert_eq!(month_index(2021, 8), 739);
    assert_eq!(month_index(2024, 5), 772);
}
