//! End-to-end run: transforms, clustering, cluster tests, weights,
//! instrument diagnostics, model fits, post-estimation tests, evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hedonic_core::dataset::{correlation_matrix, derive_columns, describe, DeriveOptions};
use hedonic_core::design::{build_design, Design};
use hedonic_core::discrete::{classification_table, fit_binary, lr_test, marginal_effects, BinaryFit, Link};
use hedonic_core::eval::{evaluate_predictions, simulate_market, split_train_test, REFERENCE_POINT};
use hedonic_core::iv::{fit_2sls, fit_sar_gs2sls, weak_iv_test};
use hedonic_core::panel::{fit_fe, fit_re, hausman_test, PanelIndex, ReFit};
use hedonic_core::regress::{fit_design, fit_ols, fracpoly_search, Vce};
use hedonic_core::spatial::{
    build_weights, cut_dendrogram, hclust, kmeans, median_pairwise_distance, oneway_anova_bartlett,
    SpatialWeightMatrix,
};
use hedonic_core::{FitResult, PropertyDataset};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Coordinates, ModelConfig, ModelKind, PipelineConfig};
use crate::error::{CliError, Context};
use crate::io;
use crate::report::{num, Report};

/// Columns summarized by the describe stage when present.
pub const DESCRIBE_COLUMNS: [&str; 18] = [
    "price",
    "lnprice",
    "sqft",
    "lnsqft",
    "lot_sqft",
    "beds",
    "baths",
    "stories",
    "parking",
    "year_built",
    "latitude",
    "longitude",
    "std_latitude",
    "std_longitude",
    "dist_pch",
    "time",
    "house_by_year",
    "pricedummy",
];

pub const CORRELATION_COLUMNS: [&str; 6] = ["lnprice", "lnsqft", "beds", "baths", "stories", "lndist_pch"];

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub output_dir: PathBuf,
    /// Files written, relative to `output_dir`, in write order.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn report(&mut self, stem: &str, r: &Report) -> Result<(), CliError> {
        self.put(&format!("{stem}.json"), &r.to_json())?;
        self.put(&format!("{stem}.txt"), &r.to_text())
    }

    fn series(&mut self, name: &str, columns: &[(&str, &[f64])]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        io::write_series(&mut buf, columns)?;
        self.put(name, &String::from_utf8(buf).expect("utf-8 csv"))
    }
}

/// Hex SHA-256 of the matrix shape and its entries (little-endian, row-major).
pub fn weights_digest(w: &SpatialWeightMatrix) -> String {
    let mut h = Sha256::new();
    h.update((w.n() as u64).to_le_bytes());
    for v in w.weights.as_slice() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the configured data and adds the derived columns.
pub fn prepare_dataset(cfg: &PipelineConfig, warnings: &mut Vec<String>) -> Result<PropertyDataset, CliError> {
    if let Some(s) = &cfg.data.synthetic {
        let seed = cfg.seed.ok_or_else(|| CliError::Config(vec!["`seed` is required for synthetic data".into()]))?;
        let market = simulate_market(&s.dgp(seed)).context("simulate")?;
        let mut ds = market.dataset;
        if let Some([lat, lon]) = cfg.data.reference {
            if [lat, lon] != REFERENCE_POINT || cfg.data.price_threshold.is_some() {
                let lnprice = ds.column("lnprice").context("simulate")?;
                let threshold = cfg.data.price_threshold.unwrap_or_else(|| ds.mean_price());
                let mut opts = DeriveOptions::new(threshold).with_reference(lat, lon);
                opts.metric = cfg.data.metric;
                ds = derive_columns(&ds, &opts).context("derive")?;
                ds.set_column("lnprice", lnprice).context("derive")?;
            }
        }
        return Ok(ds);
    }
    let input = cfg.data.input.as_deref().ok_or_else(|| CliError::Config(vec!["data.input is not set".into()]))?;
    let loaded = io::load_csv(input, &cfg.column_map())?;
    for (row, reason) in &loaded.rejected {
        warnings.push(format!("row {row} rejected: {reason}"));
    }
    for row in &loaded.duplicates {
        warnings.push(format!("row {row} dropped: repeated address"));
    }
    for col in &loaded.ignored {
        warnings.push(format!("column `{col}` ignored: not numeric"));
    }
    let threshold = cfg.data.price_threshold.unwrap_or_else(|| loaded.dataset.mean_price());
    let mut opts = DeriveOptions::new(threshold);
    opts.metric = cfg.data.metric;
    if let Some([lat, lon]) = cfg.data.reference {
        opts = opts.with_reference(lat, lon);
    }
    derive_columns(&loaded.dataset, &opts).context("derive")
}

/// Lists every column referenced by the config that the dataset lacks.
pub fn check_columns(cfg: &PipelineConfig, ds: &PropertyDataset) -> Result<(), CliError> {
    let generated: &[&str] = if cfg.cluster.is_some() { &["kmeans_cluster", "hier_cluster"] } else { &[] };
    let has = |c: &str| ds.has_column(c) || generated.contains(&c);
    let mut missing = Vec::new();
    if let Some(c) = &cfg.cluster {
        if !has(&c.test_column) {
            missing.push(format!("cluster.test_column: unknown column `{}`", c.test_column));
        }
    }
    for m in &cfg.models {
        for c in m.columns() {
            if !has(&c) {
                missing.push(format!("model `{}`: unknown column `{c}`", m.name));
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(missing))
    }
}

fn cluster_coordinates(ds: &PropertyDataset, which: Coordinates) -> Result<Vec<[f64; 2]>, CliError> {
    match which {
        Coordinates::Raw => Ok(ds.coordinates()),
        Coordinates::Standardized => {
            let lat = ds.column("std_latitude").context("cluster")?;
            let lon = ds.column("std_longitude").context("cluster")?;
            Ok(lat.into_iter().zip(lon).map(|(a, b)| [a, b]).collect())
        }
    }
}

/// Model results kept for post-estimation tests.
#[derive(Default)]
struct Fitted {
    binary: BTreeMap<String, BinaryFit>,
    fe: BTreeMap<String, FitResult>,
    re: BTreeMap<String, ReFit>,
}

/// `kind y x1 x2 ... [iv] [options]`
pub fn spec_line(m: &ModelConfig) -> String {
    let mut s = format!("{} {}", m.kind.label(), m.y);
    for x in &m.x {
        s.push(' ');
        s.push_str(x);
    }
    for iv in &m.iv {
        s.push_str(&format!(" ({iv})"));
    }
    let mut opts = Vec::new();
    if let Some(a) = &m.absorb {
        opts.push(format!("absorb({a})"));
    }
    if let Some(v) = &m.vce {
        opts.push(format!("vce({v})"));
    }
    if let Some(u) = &m.unit {
        opts.push(format!("unit({u})"));
    }
    if let Some(f) = &m.focus {
        opts.push(format!("focus({f})"));
    }
    if !m.intercept {
        opts.push("nocons".into());
    }
    if !opts.is_empty() {
        s.push_str(", ");
        s.push_str(&opts.join(" "));
    }
    s
}

/// Fits one configured model and returns its report.
pub fn fit_model(
    m: &ModelConfig,
    ds: &PropertyDataset,
    weights: Option<(&SpatialWeightMatrix, &str)>,
) -> Result<(Report, Option<BinaryFit>, Option<FitResult>, Option<ReFit>), CliError> {
    let spec = spec_line(m);
    let ctx = format!("model `{}`", m.name);
    Ok(match m.kind {
        ModelKind::Ols | ModelKind::Areg => {
            let fit = fit_ols(ds, &m.model_spec()).context(&ctx)?;
            (Report::from_fit(&spec, &fit), None, None, None)
        }
        ModelKind::Tsls => {
            let fit = fit_2sls(ds, &m.iv_spec()).context(&ctx)?;
            (Report::from_fit(&spec, &fit), None, None, None)
        }
        ModelKind::Sar => {
            let (w, digest) = weights.ok_or_else(|| CliError::Config(vec![format!("{ctx}: no spatial weights")]))?;
            let sar = fit_sar_gs2sls(ds, &m.iv_spec(), w).context(&ctx)?;
            (Report::from_sar(&spec, &sar, digest), None, None, None)
        }
        ModelKind::Logit | ModelKind::Probit => {
            let link = if m.kind == ModelKind::Logit { Link::Logit } else { Link::Probit };
            let fit = fit_binary(ds, &m.model_spec(), link).context(&ctx)?;
            let mut r = Report::from_binary(&spec, &fit);
            r.add_marginal_effects(&marginal_effects(&fit, None).context(&ctx)?);
            let table = classification_table(&fit.probabilities, &fit.actual, m.threshold.unwrap_or(0.5)).context(&ctx)?;
            r.add_classification(&table);
            (r, Some(fit), None, None)
        }
        ModelKind::Fe => {
            let unit = m.unit.as_deref().unwrap_or_default();
            let fit = fit_fe(ds, &PanelIndex::new(unit), &m.model_spec()).context(&ctx)?;
            (Report::from_fit(&spec, &fit), None, Some(fit), None)
        }
        ModelKind::Re => {
            let unit = m.unit.as_deref().unwrap_or_default();
            let re = fit_re(ds, &PanelIndex::new(unit), &m.model_spec()).context(&ctx)?;
            (Report::from_re(&spec, &re), None, None, Some(re))
        }
        ModelKind::Fracpoly => {
            let focus = m.focus.as_deref().unwrap_or_default();
            let fp = fracpoly_search(ds, &m.y, focus, &m.x, m.scale.unwrap_or(1.0)).context(&ctx)?;
            (Report::from_fracpoly(&spec, &fp), None, None, None)
        }
    })
}

/// Out-of-sample predictions of an OLS model refit on the training rows.
///
/// The design is built once on all rows so indicator columns share their
/// levels between the two partitions.
pub fn holdout_predictions(
    ds: &PropertyDataset,
    m: &ModelConfig,
    train: &[usize],
    test: &[usize],
) -> Result<(FitResult, Vec<f64>, Vec<f64>), CliError> {
    let ctx = format!("eval model `{}`", m.name);
    let full = build_design(ds, &m.y, &m.x, m.intercept, &[]).context(&ctx)?;
    let position: BTreeMap<usize, usize> = full.rows.iter().enumerate().map(|(p, &r)| (r, p)).collect();
    let locate = |rows: &[usize]| rows.iter().filter_map(|r| position.get(r).copied()).collect::<Vec<usize>>();
    let (train_pos, test_pos) = (locate(train), locate(test));
    let subset = Design {
        response: full.response.clone(),
        y: train_pos.iter().map(|&p| full.y[p]).collect(),
        x: full.x.select_rows(&train_pos),
        names: full.names.clone(),
        rows: train_pos.iter().map(|&p| full.rows[p]).collect(),
        aux: BTreeMap::new(),
    };
    let fit = fit_design(&subset, &Vce::Classical, None, "ols").context(&ctx)?;
    let coef: Vec<f64> = full
        .names
        .iter()
        .map(|n| fit.coefficient(n).ok_or_else(|| CliError::Data(format!("{ctx}: `{n}` was dropped in training"))))
        .collect::<Result<_, _>>()?;
    let predicted = full.x.select_rows(&test_pos).matvec(&coef).context(&ctx)?;
    let actual = test_pos.iter().map(|&p| full.y[p]).collect();
    Ok((fit, actual, predicted))
}

/// Runs every configured stage, writing reports into `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutcome, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut w = Writer { dir: out_dir.to_path_buf(), files: Vec::new() };
    let mut warnings = Vec::new();
    let seed = cfg.seed.unwrap_or(0);

    // transforms
    let mut ds = prepare_dataset(cfg, &mut warnings)?;
    check_columns(cfg, &ds)?;
    let present: Vec<&str> = DESCRIBE_COLUMNS.iter().copied().filter(|c| ds.has_column(c)).collect();
    let stats = describe(&ds, &present).context("describe")?;
    let rows: Vec<Value> = stats
        .columns
        .iter()
        .map(|c| json!({"variable": c.name, "obs": c.n, "mean": num(c.mean), "sd": num(c.sd), "min": num(c.min), "max": num(c.max)}))
        .collect();
    w.report("describe", &Report::new("describe", Some(ds.len())).with("columns", Value::Array(rows)))?;
    let corr_cols: Vec<&str> = CORRELATION_COLUMNS.iter().copied().filter(|c| ds.has_column(c)).collect();
    if corr_cols.len() >= 2 {
        match correlation_matrix(&ds, &corr_cols) {
            Ok(c) => {
                let rows: Vec<Value> = c
                    .names
                    .iter()
                    .zip(&c.values)
                    .map(|(name, vals)| {
                        let mut o = serde_json::Map::new();
                        o.insert("variable".into(), json!(name));
                        for (other, v) in c.names.iter().zip(vals) {
                            o.insert(other.clone(), num(*v));
                        }
                        Value::Object(o)
                    })
                    .collect();
                w.report("correlation", &Report::new("correlate", Some(c.n)).with("matrix", Value::Array(rows)))?;
            }
            Err(e) => warnings.push(format!("correlation skipped: {e}")),
        }
    }

    // clustering
    if let Some(c) = &cfg.cluster {
        let coords = cluster_coordinates(&ds, c.coordinates)?;
        let km = kmeans(&coords, c.k, seed).context("kmeans")?;
        let dendro = hclust(&coords, c.linkage).context("hierarchical clustering")?;
        let hier = cut_dendrogram(&dendro, c.k).context("dendrogram cut")?;
        ds.set_column("kmeans_cluster", km.as_f64()).context("kmeans")?;
        ds.set_column("hier_cluster", hier.as_f64()).context("hierarchical clustering")?;
        let sizes = |a: &hedonic_core::spatial::ClusterAssignment| json!(a.sizes());
        let r = Report::new(format!("cluster kmeans k={} ; hier {:?}", c.k, c.linkage).to_lowercase(), Some(ds.len()))
            .with("k", json!(c.k))
            .with("kmeans_sizes", sizes(&km))
            .with("kmeans_within_ss", km.within_ss.map_or(Value::Null, num))
            .with("kmeans_iterations", json!(km.history.len()))
            .with("hier_sizes", sizes(&hier))
            .with("hier_top_height", dendro.merges.last().map_or(Value::Null, |m| num(m.height)));
        w.report("clusters", &r)?;
        let lat = ds.column("latitude").context("cluster")?;
        let lon = ds.column("longitude").context("cluster")?;
        let (kl, hl) = (km.as_f64(), hier.as_f64());
        w.series("clusters.csv", &[("latitude", &lat), ("longitude", &lon), ("kmeans_cluster", &kl), ("hier_cluster", &hl)])?;
        let col = |f: fn(&hedonic_core::spatial::Merge) -> f64| dendro.merges.iter().map(f).collect::<Vec<f64>>();
        let (l, r, h, s) = (col(|m| m.left as f64), col(|m| m.right as f64), col(|m| m.height), col(|m| m.size as f64));
        w.series("dendrogram.csv", &[("left", &l), ("right", &r), ("height", &h), ("size", &s)])?;

        // cluster-validity tests
        let values = ds.column(&c.test_column).context("cluster tests")?;
        let (anova, bartlett) = oneway_anova_bartlett(&values, &km).context("anova")?;
        w.report("test_anova", &Report::from_anova(&format!("anova {} by kmeans_cluster", c.test_column), &anova))?;
        match bartlett {
            Ok(b) => w.report("test_bartlett", &Report::from_bartlett(&format!("bartlett {} by kmeans_cluster", c.test_column), &b))?,
            Err(e) => warnings.push(format!("bartlett skipped: {e}")),
        }
    }

    // weights
    let mut weights = None;
    if let Some(wc) = &cfg.weights {
        let coords = ds.coordinates();
        let cutoff = wc.cutoff.unwrap_or_else(|| median_pairwise_distance(&coords));
        let wm = build_weights(&coords, cutoff, wc.row_standardize).context("weights")?;
        let digest = weights_digest(&wm);
        let n = wm.n();
        let nonzero = wm.weights.as_slice().iter().filter(|v| **v != 0.0).count();
        let r = Report::new("weights inverse-distance", Some(n))
            .with("cutoff", num(cutoff))
            .with("row_standardized", json!(wc.row_standardize))
            .with("nonzero", json!(nonzero))
            .with("mean_neighbors", num(nonzero as f64 / n as f64))
            .with("isolated", json!(wm.isolated.len()))
            .with("weights_digest", json!(digest));
        w.report("weights", &r)?;
        if !wm.isolated.is_empty() {
            warnings.push(format!("{} observation(s) have no neighbour within the cutoff", wm.isolated.len()));
        }
        weights = Some((wm, digest));
    }

    // instrument diagnostics
    if let Some(name) = &cfg.tests.weak_iv {
        let m = cfg.model(name).expect("validated");
        let report = weak_iv_test(&ds, &m.iv_spec()).context("weak instrument test")?;
        w.report("test_weakiv", &Report::from_weak_iv(&format!("weakiv {}", spec_line(m)), &report))?;
    }

    // fits
    let mut fitted = Fitted::default();
    for m in &cfg.models {
        let (report, binary, fe, re) = fit_model(m, &ds, weights.as_ref().map(|(wm, d)| (wm, d.as_str())))?;
        w.report(&format!("model_{}", m.name), &report)?;
        w.put(&format!("model_{}.csv", m.name), &report.to_csv())?;
        if let Some(b) = binary {
            fitted.binary.insert(m.name.clone(), b);
        }
        if let Some(f) = fe {
            fitted.fe.insert(m.name.clone(), f);
        }
        if let Some(r) = re {
            fitted.re.insert(m.name.clone(), r);
        }
    }

    // post-estimation tests
    for [u, r] in &cfg.tests.lrtest {
        let lr = lr_test(&fitted.binary[u], &fitted.binary[r]).context("lr test")?;
        w.report(&format!("test_lrtest_{u}_{r}"), &Report::from_lr(&format!("lrtest {u} {r}"), &lr))?;
    }
    if let Some([fe, re]) = &cfg.tests.hausman {
        let h = hausman_test(&fitted.fe[fe], &fitted.re[re].fit).context("hausman test")?;
        w.report("test_hausman", &Report::from_hausman(&format!("hausman {fe} {re}"), &h))?;
    }

    // evaluation
    if let Some(e) = &cfg.eval {
        let m = cfg.model(&e.model).expect("validated");
        let (train, test) = split_train_test(ds.len(), e.train_frac, seed, e.method.into()).context("split")?;
        let (_, actual, predicted) = holdout_predictions(&ds, m, &train, &test)?;
        let report = evaluate_predictions(&actual, &predicted).context("evaluate")?.with_split(train.len(), test.len());
        w.report("eval", &Report::from_eval(&format!("eval {}", spec_line(m)), &report))?;
        w.series("residuals.csv", &[("actual", &actual), ("predicted", &predicted), ("residual", &report.residuals)])?;
    }

    let mut data = Vec::new();
    io::write_csv(&mut data, &ds)?;
    w.put("data.csv", &String::from_utf8(data).expect("utf-8 csv"))?;

    let mut manifest = serde_json::Map::new();
    for f in &w.files {
        let bytes = std::fs::read(out_dir.join(f)).map_err(|e| CliError::io(&out_dir.join(f), e))?;
        manifest.insert(f.clone(), json!(sha256_hex(&bytes)));
    }
    let body = json!({"files": manifest, "warnings": warnings});
    w.put("manifest.json", &(serde_json::to_string_pretty(&body).expect("manifest serializes") + "\n"))?;

    Ok(PipelineOutcome { output_dir: out_dir.to_path_buf(), files: w.files, warnings })
}
