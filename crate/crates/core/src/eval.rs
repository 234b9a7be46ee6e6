//! Train/test splits, prediction metrics, a synthetic housing market and
//! Monte Carlo summaries.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{derive_columns, DeriveOptions, PropertyDataset, PropertyRecord, Style};
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::spatial::{build_weights, point_distance, DistanceMetric, SpatialWeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    /// Each row goes to training with probability `train_frac`.
    #[default]
    Bernoulli,
    /// Exactly `round(train_frac * n)` training rows, chosen uniformly.
    ExactCount,
}

/// Splits `0..n` into sorted, disjoint training and test row sets.
pub fn split_train_test(n: usize, train_frac: f64, seed: u64, method: SplitMethod) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction must be in (0, 1), got {train_frac}")));
    }
    if n < 2 {
        return Err(Error::InsufficientObservations { n, params: 2 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_train: Vec<bool> = match method {
        SplitMethod::Bernoulli => (0..n).map(|_| rng.random::<f64>() < train_frac).collect(),
        SplitMethod::ExactCount => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let m = (train_frac * n as f64).round() as usize;
            let mut flags = alloc::vec![false; n];
            idx[..m].iter().for_each(|&i| flags[i] = true);
            flags
        }
    };
    let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_train[i]);
    if train.is_empty() {
        return Err(Error::EmptyPartition("training set is empty; try another seed"));
    }
    if test.is_empty() {
        return Err(Error::EmptyPartition("test set is empty; try another seed"));
    }
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_train: usize,
    pub n_test: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Squared correlation of actual and predicted; `None` if either is constant.
    pub r2_test: Option<f64>,
    /// `1 - SSR/SST` on the test rows; `None` if actual is constant.
    pub r2_ssr: Option<f64>,
    pub residual_mean: f64,
    pub residual_sd: f64,
    pub residual_skewness: Option<f64>,
    /// `actual - predicted`.
    pub residuals: Vec<f64>,
}

impl EvalReport {
    pub fn with_split(mut self, n_train: usize, n_test: usize) -> Self {
        self.n_train = n_train;
        self.n_test = n_test;
        self
    }
}

/// Error metrics of `predicted` against `actual`.
pub fn evaluate_predictions(actual: &[f64], predicted: &[f64]) -> Result<EvalReport> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch(format!("{} actual vs {} predicted values", actual.len(), predicted.len())));
    }
    if actual.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = actual.len() as f64;
    let residuals: Vec<f64> = actual.iter().zip(predicted).map(|(a, p)| a - p).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let rmse = (ssr / n).sqrt();
    let mae = residuals.iter().map(|e| e.abs()).sum::<f64>() / n;

    let am = actual.iter().sum::<f64>() / n;
    let pm = predicted.iter().sum::<f64>() / n;
    let (mut saa, mut spp, mut sap) = (0.0, 0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        saa += (a - am) * (a - am);
        spp += (p - pm) * (p - pm);
        sap += (a - am) * (p - pm);
    }
    let r2_test = (saa > 0.0 && spp > 0.0).then(|| (sap * sap / (saa * spp)).min(1.0));
    let r2_ssr = (saa > 0.0).then(|| 1.0 - ssr / saa);

    let rm = residuals.iter().sum::<f64>() / n;
    let m2 = residuals.iter().map(|e| (e - rm).powi(2)).sum::<f64>() / n;
    let m3 = residuals.iter().map(|e| (e - rm).powi(3)).sum::<f64>() / n;
    let residual_sd = if residuals.len() > 1 { (m2 * n / (n - 1.0)).sqrt() } else { 0.0 };
    let residual_skewness = (m2 > 0.0).then(|| m3 / m2.powf(1.5));
    Ok(EvalReport {
        n_train: 0,
        n_test: actual.len(),
        rmse,
        mae,
        r2_test,
        r2_ssr,
        residual_mean: rm,
        residual_sd,
        residual_skewness,
        residuals,
    })
}

/// True coefficients of the simulated hedonic equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketCoefficients {
    pub intercept: f64,
    pub lnsqft: f64,
    pub beds: f64,
    pub baths: f64,
    pub lndist_pch: f64,
    pub stories: f64,
    /// Condo premium relative to the other styles.
    pub condo: f64,
}

impl Default for MarketCoefficients {
    fn default() -> Self {
        Self { intercept: 8.2, lnsqft: 0.8, beds: -0.02, baths: 0.05, lndist_pch: -0.15, stories: 0.03, condo: -0.2 }
    }
}

impl MarketCoefficients {
    /// Regressor names in the order `simulate_market` builds them.
    pub const REGRESSORS: [&'static str; 6] = ["lnsqft", "beds", "baths", "lndist_pch", "stories", "condo"];

    pub fn named(&self) -> Vec<(String, f64)> {
        let v = [self.lnsqft, self.beds, self.baths, self.lndist_pch, self.stories, self.condo, self.intercept];
        Self::REGRESSORS
            .iter()
            .copied()
            .chain(core::iter::once(crate::design::INTERCEPT))
            .zip(v)
            .map(|(n, b)| (n.to_string(), b))
            .collect()
    }
}

/// Data-generating process for a synthetic coastal housing market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDGP {
    pub n: usize,
    pub coefficients: MarketCoefficients,
    /// Spatial-lag parameter of the price equation.
    pub lambda: f64,
    /// Correlation between the `lnsqft` disturbance and the price error.
    pub endogeneity: f64,
    /// First-stage coefficient of parking on `lnsqft`.
    pub instrument_strength: f64,
    pub noise_sd: f64,
    /// Neighbour cutoff of the weight matrix, in degrees.
    pub cutoff: f64,
    pub seed: u64,
}

impl Default for MarketDGP {
    fn default() -> Self {
        Self {
            n: 620,
            coefficients: MarketCoefficients::default(),
            lambda: 0.0,
            endogeneity: 0.0,
            instrument_strength: 0.25,
            noise_sd: 0.45,
            cutoff: 0.004,
            seed: 1,
        }
    }
}

/// Endpoints of the coastline segment and the seaward reference point.
const COAST_START: [f64; 2] = [33.440, -117.730];
const COAST_END: [f64; 2] = [33.490, -117.660];
pub const REFERENCE_POINT: [f64; 2] = [33.436, -117.736];
const CROSS_SHORE_SD: f64 = 0.004;
const LNSQFT_CENTER: f64 = 7.3;
const LNSQFT_NOISE: f64 = 0.4;

impl MarketDGP {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n < 10 {
            problems.push(format!("n must be at least 10, got {}", self.n));
        }
        if !(self.lambda.abs() < 1.0) {
            problems.push(format!("|lambda| must be below 1, got {}", self.lambda));
        }
        if !(self.noise_sd > 0.0) {
            problems.push(format!("noise sd must be positive, got {}", self.noise_sd));
        }
        if !(self.endogeneity.abs() < 1.0) {
            problems.push(format!("endogeneity must be in (-1, 1), got {}", self.endogeneity));
        }
        if !(self.cutoff > 0.0) {
            problems.push(format!("cutoff must be positive, got {}", self.cutoff));
        }
        if !self.instrument_strength.is_finite() {
            problems.push("instrument strength must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedMarket {
    pub dataset: PropertyDataset,
    pub weights: SpatialWeightMatrix,
    /// `Xβ + ε` before the spatial filter.
    pub structural: Vec<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a market from `dgp`. Identical inputs give bit-identical output.
pub fn simulate_market(dgp: &MarketDGP) -> Result<SimulatedMarket> {
    dgp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(dgp.seed);
    let parking_dist = Binomial::new(6, 0.35).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let b = &dgp.coefficients;
    let rho = dgp.endogeneity;
    let (dx, dy) = (COAST_END[0] - COAST_START[0], COAST_END[1] - COAST_START[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let normal_dir = [-dy / len, dx / len];

    let n = dgp.n;
    let mut records = Vec::with_capacity(n);
    let mut structural = Vec::with_capacity(n);
    for i in 0..n {
        let t: f64 = rng.random();
        let off = CROSS_SHORE_SD * normal(&mut rng);
        let lat = COAST_START[0] + t * dx + off * normal_dir[0];
        let lon = COAST_START[1] + t * dy + off * normal_dir[1];

        let parking = parking_dist.sample(&mut rng) as f64;
        let v = normal(&mut rng);
        let e = normal(&mut rng);
        let eps = dgp.noise_sd * (rho * v + (1.0 - rho * rho).sqrt() * e);
        let sqft = (LNSQFT_CENTER + dgp.instrument_strength * (parking - 2.1) + LNSQFT_NOISE * v).exp();
        let beds = (3.0 + normal(&mut rng)).round().clamp(1.0, 6.0);
        let baths = ((2.5 + 0.8 * normal(&mut rng)) * 2.0).round().clamp(2.0, 10.0) / 2.0;
        let stories = match rng.random::<f64>() {
            u if u < 0.45 => 1.0,
            u if u < 0.9 => 2.0,
            _ => 3.0,
        };
        let style = match rng.random::<f64>() {
            u if u < 0.55 => Style::SingleFamily,
            u if u < 0.85 => Style::Condo,
            u if u < 0.95 => Style::Townhomes,
            _ => Style::DuplexTriplex,
        };
        let dist = point_distance([lat, lon], REFERENCE_POINT, DistanceMetric::DegreeEuclidean);
        let xb = b.intercept
            + b.lnsqft * sqft.ln()
            + b.beds * beds
            + b.baths * baths
            + b.lndist_pch * dist.ln()
            + b.stories * stories
            + b.condo * f64::from(style == Style::Condo);
        structural.push(xb + eps);

        let month = 7 + (i % 34) as u32; // Aug 2021 .. May 2024
        records.push(PropertyRecord {
            house_id: i as u32 + 1,
            price: 1.0,
            sqft,
            lot_sqft: if style == Style::Condo { 0.0 } else { (8.6 + 0.3 * normal(&mut rng)).exp() },
            beds,
            baths,
            stories,
            parking,
            style,
            zipcode: 92629,
            year_built: 1950 + rng.random_range(0..70),
            latitude: lat,
            longitude: lon,
            sale_year: 2021 + (month / 12) as i32,
            sale_month: month % 12 + 1,
            address: format!("{} Synthetic Way", i + 1),
        });
    }

    let coords: Vec<[f64; 2]> = records.iter().map(|r| [r.latitude, r.longitude]).collect();
    let weights = build_weights(&coords, dgp.cutoff, true)?;
    let lnprice = if dgp.lambda == 0.0 {
        structural.clone()
    } else {
        let mut a = weights.weights.scale(-dgp.lambda);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        Lu::new(&a)?.solve(&structural)
    };
    for (r, lp) in records.iter_mut().zip(&lnprice) {
        r.price = lp.exp();
    }
    let (ds, _) = PropertyDataset::new(records)?;
    let threshold = ds.mean_price();
    let opts = DeriveOptions::new(threshold).with_reference(REFERENCE_POINT[0], REFERENCE_POINT[1]);
    let mut dataset = derive_columns(&ds, &opts)?;
    // keep the exact simulated response rather than ln(exp(.))
    dataset.set_column("lnprice", lnprice)?;
    Ok(SimulatedMarket { dataset, weights, structural })
}

/// One parameter estimate from a replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDraw {
    pub name: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Replication {
    pub params: Vec<ParamDraw>,
    /// Named test p-values.
    pub tests: Vec<(String, f64)>,
    /// Named categorical outcomes (e.g. a verdict), counted by value.
    pub labels: Vec<(String, String)>,
}

impl Replication {
    /// Every coefficient of a linear fit with its 95% interval.
    pub fn from_fit(fit: &crate::regress::FitResult) -> Self {
        let params = (0..fit.coef.len())
            .map(|j| ParamDraw {
                name: fit.names[j].clone(),
                estimate: fit.coef[j],
                ci_low: fit.ci_low[j],
                ci_high: fit.ci_high[j],
            })
            .collect();
        Self { params, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: Option<f64>,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Standard error of the Monte Carlo mean, `sd / sqrt(n)`.
    pub mc_se: f64,
    pub bias: Option<f64>,
    /// Share of intervals covering the true value.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub name: String,
    pub n: usize,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub reps: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    pub alpha: f64,
    pub params: Vec<ParamSummary>,
    pub tests: Vec<TestSummary>,
    /// Counts per `(label name, value)`.
    pub labels: BTreeMap<String, BTreeMap<String, usize>>,
}

impl MonteCarloSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn test(&self, name: &str) -> Option<&TestSummary> {
        self.tests.iter().find(|t| t.name == name)
    }

    /// Share of successful replications whose `label` equals `value`.
    pub fn label_share(&self, label: &str, value: &str) -> f64 {
        let ok = self.reps - self.failures;
        let count = self.labels.get(label).and_then(|m| m.get(value)).copied().unwrap_or(0);
        if ok == 0 { 0.0 } else { count as f64 / ok as f64 }
    }
}

/// Aggregates replications in the given order. Failed replications are
/// counted but otherwise ignored.
pub fn summarize_replications(outcomes: &[Result<Replication>], truth: &[(String, f64)], alpha: f64) -> MonteCarloSummary {
    let mut draws: BTreeMap<&str, Vec<&ParamDraw>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    let mut tests: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut test_order: Vec<&str> = Vec::new();
    let mut labels: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut failures = 0;
    for outcome in outcomes {
        let Ok(rep) = outcome else {
            failures += 1;
            continue;
        };
        for d in &rep.params {
            if !draws.contains_key(d.name.as_str()) {
                order.push(&d.name);
            }
            draws.entry(&d.name).or_default().push(d);
        }
        for (name, p) in &rep.tests {
            if !tests.contains_key(name.as_str()) {
                test_order.push(name);
            }
            let e = tests.entry(name).or_default();
            e.0 += 1;
            e.1 += usize::from(*p < alpha);
        }
        for (name, value) in &rep.labels {
            *labels.entry(name.clone()).or_default().entry(value.clone()).or_default() += 1;
        }
    }
    let params = order
        .iter()
        .map(|&name| {
            let ds = &draws[name];
            let n = ds.len();
            let mean = ds.iter().map(|d| d.estimate).sum::<f64>() / n as f64;
            let var = if n > 1 { ds.iter().map(|d| (d.estimate - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            let truth = truth.iter().find(|(t, _)| t == name).map(|(_, v)| *v);
            let coverage = truth.map(|b| ds.iter().filter(|d| d.ci_low <= b && b <= d.ci_high).count() as f64 / n as f64);
            ParamSummary {
                name: name.to_string(),
                truth,
                n,
                mean,
                sd: var.sqrt(),
                mc_se: (var / n as f64).sqrt(),
                bias: truth.map(|b| mean - b),
                coverage,
            }
        })
        .collect();
    let tests = test_order
        .iter()
        .map(|&name| {
            let (n, rej) = tests[name];
            TestSummary { name: name.to_string(), n, rejection_rate: rej as f64 / n as f64 }
        })
        .collect();
    MonteCarloSummary {
        reps: outcomes.len(),
        failures,
        failure_fraction: failures as f64 / outcomes.len().max(1) as f64,
        alpha,
        params,
        tests,
        labels,
    }
}

/// Runs `estimator` on `reps` markets drawn with seeds `dgp.seed + i` and
/// summarizes against the DGP's true coefficients.
pub fn monte_carlo<F>(dgp: &MarketDGP, reps: usize, estimator: F) -> Result<MonteCarloSummary>
where
    F: Fn(&SimulatedMarket) -> Result<Replication>,
{
    if reps < 50 {
        return Err(Error::InvalidArgument(format!("at least 50 replications are required, got {reps}")));
    }
    dgp.validate()?;
    let outcomes: Vec<Result<Replication>> = (0..reps as u64)
        .map(|i| simulate_market(&dgp.with_seed(dgp.seed.wrapping_add(i))).and_then(|m| estimator(&m)))
        .collect();
    let mut truth = dgp.coefficients.named();
    truth.push(("lambda".into(), dgp.lambda));
    Ok(summarize_replications(&outcomes, &truth, 0.05))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_partition_and_deterministic() {
        let (a, b) = split_train_test(620, 0.8, 3, SplitMethod::Bernoulli).unwrap();
        assert_eq!(a.len() + b.len(), 620);
        assert!(a.iter().all(|i| b.binary_search(i).is_err()));
        assert!((a.len() as f64 - 496.0).abs() <= 40.0);
        assert_eq!(split_train_test(620, 0.8, 3, SplitMethod::Bernoulli).unwrap().0, a);
        let (c, _) = split_train_test(620, 0.8, 3, SplitMethod::ExactCount).unwrap();
        assert_eq!(c.len(), 496);
    }

    #[test]
    fn split_rejects_empty_partition() {
        assert!(matches!(split_train_test(2, 0.001, 0, SplitMethod::Bernoulli), Err(Error::EmptyPartition(_))));
        assert!(split_train_test(10, 1.0, 0, SplitMethod::Bernoulli).is_err());
    }

    #[test]
    fn perfect_predictions() {
        let a = [1.0, 2.0, 4.0];
        let r = evaluate_predictions(&a, &a).unwrap();
        assert_eq!((r.rmse, r.mae, r.r2_test), (0.0, 0.0, Some(1.0)));
    }

    #[test]
    fn symmetric_residuals() {
        let r = evaluate_predictions(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!((r.rmse, r.mae), (1.0, 1.0));
        assert_eq!(r.r2_test, None);
    }

    #[test]
    fn simulation_is_deterministic_and_exact_without_lag() {
        let dgp = MarketDGP { n: 60, ..MarketDGP::default() };
        let a = simulate_market(&dgp).unwrap();
        let b = simulate_market(&dgp).unwrap();
        assert_eq!(a, b);
        let lp = a.dataset.column("lnprice").unwrap();
        for (x, y) in lp.iter().zip(&a.structural) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn default_moments_near_target() {
        let m = simulate_market(&MarketDGP::default()).unwrap();
        let lp = m.dataset.column("lnprice").unwrap();
        let n = lp.len() as f64;
        let mean = lp.iter().sum::<f64>() / n;
        let sd = (lp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 14.6).abs() < 0.15, "mean {mean}");
        assert!((sd - 0.63).abs() < 0.12, "sd {sd}");
    }
}
