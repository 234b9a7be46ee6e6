use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hedonic_core::discrete::{fit_binary, lr_test, Link};
use hedonic_core::eval::{evaluate_predictions, simulate_market, split_train_test, MarketDGP};
use hedonic_core::iv::weak_iv_test;
use hedonic_core::panel::{fit_fe, fit_re, hausman_test, PanelIndex};
use hedonic_core::regress::ModelSpec;
use hedonic_core::spatial::{
    bartlett_test, build_weights, cut_dendrogram, hclust, kmeans, median_pairwise_distance, oneway_anova,
    ClusterAssignment, DistanceMetric, Linkage,
};
use hedonic_core::PropertyDataset;
use hedonic_cli::config::{
    DataConfig, ModelConfig, ModelKind, PipelineConfig, SplitKind, TestsConfig, OUT_DIR_ENV,
};
use hedonic_cli::error::{CliError, Context};
use hedonic_cli::pipeline::{self, fit_model, holdout_predictions, spec_line, weights_digest, DESCRIBE_COLUMNS};
use hedonic_cli::report::{num, Format, Report};
use hedonic_cli::{io, run_pipeline};
use serde_json::{json, Value};

/// Spatial hedonic price models: transforms, clustering, estimation, evaluation.
#[derive(Parser)]
#[command(name = "hedonic", version)]
struct Cli {
    /// Print JSON instead of aligned text (same as --format json).
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics and correlations.
    Describe {
        #[command(flatten)]
        data: DataArgs,
        /// Columns to summarize (default: the standard set present in the data).
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// Also report the correlation matrix of the columns.
        #[arg(long)]
        corr: bool,
    },
    /// Add derived columns and write the analysis dataset.
    Transform {
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV (default: data.csv in the output directory).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Geographic clustering.
    Cluster {
        method: ClusterMethod,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        k: usize,
        /// Required for k-means.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = LinkageArg::Ward)]
        linkage: LinkageArg,
        /// Cluster on raw latitude/longitude instead of z-scores.
        #[arg(long)]
        raw: bool,
        /// Write the dataset with the cluster column added.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Write the dendrogram merges as CSV (hier only).
        #[arg(long)]
        dendrogram: Option<PathBuf>,
    },
    /// Inverse-distance spatial weights.
    Weights {
        #[command(flatten)]
        data: DataArgs,
        /// Neighbour cutoff in degrees (default: median pairwise distance).
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        no_standardize: bool,
        /// Write non-zero entries (row, col, weight) as CSV.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Estimate a model.
    Fit {
        kind: FitKind,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Weight cutoff for sar (default: median pairwise distance).
        #[arg(long)]
        cutoff: Option<f64>,
    },
    /// Hypothesis tests.
    Test {
        kind: TestKind,
        #[command(flatten)]
        data: DataArgs,
        /// anova/bartlett: compared column.
        #[arg(long)]
        value: Option<String>,
        /// anova/bartlett: grouping column.
        #[arg(long)]
        group: Option<String>,
        #[command(flatten)]
        model: ModelArgs,
        /// lrtest: regressors of the restricted model.
        #[arg(long, value_delimiter = ',')]
        restricted: Vec<String>,
        /// lrtest: link function.
        #[arg(long, value_enum, default_value_t = LinkArg::Logit)]
        link: LinkArg,
    },
    /// Out-of-sample evaluation of an OLS model on a seeded split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SplitKind::Bernoulli)]
        split: SplitKind,
        /// Write actual, predicted and residual as CSV.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Draw a synthetic market and write it as CSV.
    Simulate {
        #[arg(long, default_value_t = 620)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0)]
        endogeneity: f64,
        #[arg(long)]
        instrument_strength: Option<f64>,
        #[arg(long)]
        noise_sd: Option<f64>,
        /// Intercept of the price equation; lower it as lambda grows to keep
        /// mean log price in place.
        #[arg(long)]
        intercept: Option<f64>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run the configured end-to-end pipeline.
    Pipeline {
        #[arg(long, short)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with one row per sale.
    #[arg(long, short)]
    input: PathBuf,
    /// Distance reference point as `lat,lon`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    reference: Option<[f64; 2]>,
    #[arg(long, value_enum, default_value_t = MetricArg::DegreeEuclidean)]
    metric: MetricArg,
    /// Price at or above which `pricedummy` is 1 (default: mean price).
    #[arg(long)]
    price_threshold: Option<f64>,
    /// Column mapping `field=HEADER`, repeatable.
    #[arg(long = "map", value_parser = parse_mapping)]
    mapping: Vec<(String, String)>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    y: Option<String>,
    /// Regressors; `i.col` expands to indicators.
    #[arg(long, value_delimiter = ',')]
    x: Vec<String>,
    /// `endogenous=instrument[+instrument]`, repeatable.
    #[arg(long)]
    iv: Vec<String>,
    #[arg(long)]
    absorb: Option<String>,
    /// `ols`, `robust` or `cluster:<column>`.
    #[arg(long)]
    vce: Option<String>,
    /// Panel unit column (fe, re, hausman).
    #[arg(long)]
    unit: Option<String>,
    /// Fractional-polynomial variable.
    #[arg(long)]
    focus: Option<String>,
    #[arg(long)]
    scale: Option<f64>,
    /// Classification cutoff for logit/probit.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    nocons: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterMethod {
    Kmeans,
    Hier,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Ward,
    Complete,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    DegreeEuclidean,
    HaversineKm,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    Logit,
    Probit,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Ols,
    Areg,
    #[value(name = "2sls")]
    Tsls,
    Sar,
    Logit,
    Probit,
    Fe,
    Re,
    Fracpoly,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    Anova,
    Bartlett,
    Weakiv,
    Lrtest,
    Hausman,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected `lat,lon`")?;
    let lat = a.trim().parse().map_err(|_| format!("bad latitude {a:?}"))?;
    let lon = b.trim().parse().map_err(|_| format!("bad longitude {b:?}"))?;
    Ok([lat, lon])
}

fn parse_mapping(s: &str) -> Result<(String, String), String> {
    let (f, h) = s.split_once('=').ok_or("expected `field=HEADER`")?;
    Ok((f.trim().to_string(), h.trim().to_string()))
}

impl DataArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            seed: None,
            output_dir: None,
            data: DataConfig {
                input: Some(self.input.clone()),
                synthetic: None,
                columns: self.mapping.iter().cloned().collect(),
                reference: self.reference,
                metric: match self.metric {
                    MetricArg::DegreeEuclidean => DistanceMetric::DegreeEuclidean,
                    MetricArg::HaversineKm => DistanceMetric::HaversineKm,
                },
                price_threshold: self.price_threshold,
            },
            cluster: None,
            weights: None,
            models: Vec::new(),
            tests: TestsConfig::default(),
            eval: None,
        }
    }

    fn load(&self) -> Result<PropertyDataset, CliError> {
        let cfg = self.config();
        cfg.validate()?;
        let mut warnings = Vec::new();
        let ds = pipeline::prepare_dataset(&cfg, &mut warnings)?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(ds)
    }
}

impl ModelArgs {
    fn model(&self, kind: ModelKind) -> Result<ModelConfig, CliError> {
        let m = ModelConfig {
            name: kind.label().into(),
            kind,
            y: self.y.clone().ok_or_else(|| CliError::Usage("--y is required".into()))?,
            x: self.x.clone(),
            iv: self.iv.clone(),
            absorb: self.absorb.clone(),
            vce: self.vce.clone(),
            unit: self.unit.clone(),
            focus: self.focus.clone(),
            scale: self.scale,
            threshold: self.threshold,
            intercept: !self.nocons,
        };
        let mut problems = Vec::new();
        m.problems(&mut problems);
        if problems.is_empty() {
            Ok(m)
        } else {
            Err(CliError::Config(problems))
        }
    }
}

fn emit(report: &Report, format: Format) {
    print!("{}", report.render(format));
}

fn default_output(name: &str) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(name), |d| PathBuf::from(d).join(name))
}

fn save_dataset(path: &Path, ds: &PropertyDataset) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    io::save_csv(path, ds)
}

fn write_series(path: &Path, columns: &[(&str, &[f64])]) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    io::write_series(std::io::BufWriter::new(file), columns)
}

fn groups_from(ds: &PropertyDataset, col: &str) -> Result<ClusterAssignment, CliError> {
    let values = ds.column(col).context("group")?;
    if let Some(row) = values.iter().position(|v| !(v.fract() == 0.0 && *v >= 0.0)) {
        return Err(CliError::Data(format!("group column `{col}` must hold non-negative integers (row {})", row + 1)));
    }
    Ok(ClusterAssignment::from_labels(&values.iter().map(|v| *v as usize).collect::<Vec<_>>()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let format = if cli.json { Format::Json } else { cli.format };
    match cli.command {
        Command::Describe { data, columns, corr } => {
            let ds = data.load()?;
            let cols: Vec<String> = if columns.is_empty() {
                DESCRIBE_COLUMNS.iter().filter(|c| ds.has_column(c)).map(|c| c.to_string()).collect()
            } else {
                columns
            };
            let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
            let stats = hedonic_core::dataset::describe(&ds, &refs).context("describe")?;
            let rows: Vec<Value> = stats
                .columns
                .iter()
                .map(|c| json!({"variable": c.name, "obs": c.n, "mean": num(c.mean), "sd": num(c.sd), "min": num(c.min), "max": num(c.max)}))
                .collect();
            let mut r = Report::new("describe", Some(ds.len())).with("columns", Value::Array(rows));
            if corr {
                let c = hedonic_core::dataset::correlation_matrix(&ds, &refs).context("correlate")?;
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
                r.set("correlation", Value::Array(rows));
            }
            emit(&r, format);
        }
        Command::Transform { data, output } => {
            let ds = data.load()?;
            let path = output.unwrap_or_else(|| default_output("data.csv"));
            save_dataset(&path, &ds)?;
            let r = Report::new("transform", Some(ds.len()))
                .with("output", json!(path.display().to_string()))
                .with("derived_columns", json!(ds.derived().keys().collect::<Vec<_>>()));
            emit(&r, format);
        }
        Command::Cluster { method, data, k, seed, linkage, raw, output, dendrogram } => {
            let mut ds = data.load()?;
            let coords = if raw {
                ds.coordinates()
            } else {
                let lat = ds.column("std_latitude").context("cluster")?;
                let lon = ds.column("std_longitude").context("cluster")?;
                lat.into_iter().zip(lon).map(|(a, b)| [a, b]).collect()
            };
            let linkage = match linkage {
                LinkageArg::Ward => Linkage::Ward,
                LinkageArg::Complete => Linkage::Complete,
            };
            let (column, assignment, mut r) = match method {
                ClusterMethod::Kmeans => {
                    let seed = seed.ok_or_else(|| CliError::Usage("kmeans needs --seed".into()))?;
                    let a = kmeans(&coords, k, seed).context("kmeans")?;
                    let r = Report::new(format!("cluster kmeans k={k}"), Some(ds.len()))
                        .with("within_ss", a.within_ss.map_or(Value::Null, num))
                        .with("within_ss_history", json!(a.history));
                    ("kmeans_cluster", a, r)
                }
                ClusterMethod::Hier => {
                    let d = hclust(&coords, linkage).context("hierarchical clustering")?;
                    let a = cut_dendrogram(&d, k).context("dendrogram cut")?;
                    if let Some(path) = &dendrogram {
                        let col = |f: fn(&hedonic_core::spatial::Merge) -> f64| d.merges.iter().map(f).collect::<Vec<f64>>();
                        write_series(
                            path,
                            &[
                                ("left", &col(|m| m.left as f64)),
                                ("right", &col(|m| m.right as f64)),
                                ("height", &col(|m| m.height)),
                                ("size", &col(|m| m.size as f64)),
                            ],
                        )?;
                    }
                    let r = Report::new(format!("cluster hier {linkage:?} k={k}").to_lowercase(), Some(ds.len()))
                        .with("top_height", d.merges.last().map_or(Value::Null, |m| num(m.height)));
                    ("hier_cluster", a, r)
                }
            };
            r.set("k", json!(assignment.k));
            r.set("sizes", json!(assignment.sizes()));
            ds.set_column(column, assignment.as_f64()).context("cluster")?;
            if let Some(path) = output {
                save_dataset(&path, &ds)?;
                r.set("output", json!(path.display().to_string()));
            }
            emit(&r, format);
        }
        Command::Weights { data, cutoff, no_standardize, output } => {
            let ds = data.load()?;
            let coords = ds.coordinates();
            let cutoff = cutoff.unwrap_or_else(|| median_pairwise_distance(&coords));
            let w = build_weights(&coords, cutoff, !no_standardize).context("weights")?;
            let nonzero: Vec<(usize, usize, f64)> = (0..w.n())
                .flat_map(|i| w.weights.row(i).iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, v)| (i, j, *v)))
                .collect();
            if let Some(path) = &output {
                let col = |f: fn(&(usize, usize, f64)) -> f64| nonzero.iter().map(f).collect::<Vec<f64>>();
                write_series(path, &[("row", &col(|t| t.0 as f64)), ("col", &col(|t| t.1 as f64)), ("weight", &col(|t| t.2))])?;
            }
            let r = Report::new("weights inverse-distance", Some(w.n()))
                .with("cutoff", num(cutoff))
                .with("row_standardized", json!(w.row_standardized))
                .with("nonzero", json!(nonzero.len()))
                .with("isolated", json!(w.isolated.len()))
                .with("weights_digest", json!(weights_digest(&w)));
            emit(&r, format);
        }
        Command::Fit { kind, data, model, cutoff } => {
            let kind = match kind {
                FitKind::Ols => ModelKind::Ols,
                FitKind::Areg => ModelKind::Areg,
                FitKind::Tsls => ModelKind::Tsls,
                FitKind::Sar => ModelKind::Sar,
                FitKind::Logit => ModelKind::Logit,
                FitKind::Probit => ModelKind::Probit,
                FitKind::Fe => ModelKind::Fe,
                FitKind::Re => ModelKind::Re,
                FitKind::Fracpoly => ModelKind::Fracpoly,
            };
            let m = model.model(kind)?;
            let ds = data.load()?;
            let weights = if kind == ModelKind::Sar {
                let coords = ds.coordinates();
                let cutoff = cutoff.unwrap_or_else(|| median_pairwise_distance(&coords));
                let w = build_weights(&coords, cutoff, true).context("weights")?;
                let d = weights_digest(&w);
                Some((w, d))
            } else {
                None
            };
            let (report, ..) = fit_model(&m, &ds, weights.as_ref().map(|(w, d)| (w, d.as_str())))?;
            emit(&report, format);
        }
        Command::Test { kind, data, value, group, model, restricted, link } => {
            let ds = data.load()?;
            let report = match kind {
                TestKind::Anova | TestKind::Bartlett => {
                    let value = value.ok_or_else(|| CliError::Usage("--value is required".into()))?;
                    let group = group.ok_or_else(|| CliError::Usage("--group is required".into()))?;
                    let values = ds.column(&value).context("test")?;
                    let groups = groups_from(&ds, &group)?;
                    let spec = format!("{} {value} by {group}", if matches!(kind, TestKind::Anova) { "anova" } else { "bartlett" });
                    if matches!(kind, TestKind::Anova) {
                        Report::from_anova(&spec, &oneway_anova(&values, &groups).context("anova")?)
                    } else {
                        Report::from_bartlett(&spec, &bartlett_test(&values, &groups).context("bartlett")?)
                    }
                }
                TestKind::Weakiv => {
                    let m = model.model(ModelKind::Tsls)?;
                    Report::from_weak_iv(&format!("weakiv {}", spec_line(&m)), &weak_iv_test(&ds, &m.iv_spec()).context("weakiv")?)
                }
                TestKind::Lrtest => {
                    let kind = match link {
                        LinkArg::Logit => ModelKind::Logit,
                        LinkArg::Probit => ModelKind::Probit,
                    };
                    let full = model.model(kind)?;
                    let link = if kind == ModelKind::Logit { Link::Logit } else { Link::Probit };
                    let restricted_refs: Vec<&str> = restricted.iter().map(String::as_str).collect();
                    let u = fit_binary(&ds, &full.model_spec(), link).context("unrestricted model")?;
                    let r = fit_binary(&ds, &ModelSpec::new(&full.y, &restricted_refs), link).context("restricted model")?;
                    Report::from_lr(&format!("lrtest {} vs [{}]", spec_line(&full), restricted.join(" ")), &lr_test(&u, &r).context("lrtest")?)
                }
                TestKind::Hausman => {
                    let m = model.model(ModelKind::Fe)?;
                    let index = PanelIndex::new(m.unit.as_deref().unwrap_or_default());
                    let fe = fit_fe(&ds, &index, &m.model_spec()).context("fe")?;
                    let re = fit_re(&ds, &index, &m.model_spec()).context("re")?;
                    Report::from_hausman(&format!("hausman {}", spec_line(&m)), &hausman_test(&fe, &re.fit).context("hausman")?)
                }
            };
            emit(&report, format);
        }
        Command::Eval { data, model, train_frac, seed, split, residuals } => {
            let m = model.model(ModelKind::Ols)?;
            if m.absorb.is_some() {
                return Err(CliError::Usage("eval cannot predict with --absorb".into()));
            }
            let ds = data.load()?;
            let (train, test) = split_train_test(ds.len(), train_frac, seed, split.into()).context("split")?;
            let (_, actual, predicted) = holdout_predictions(&ds, &m, &train, &test)?;
            let e = evaluate_predictions(&actual, &predicted).context("evaluate")?.with_split(train.len(), test.len());
            if let Some(path) = residuals {
                write_series(&path, &[("actual", &actual), ("predicted", &predicted), ("residual", &e.residuals)])?;
            }
            emit(&Report::from_eval(&format!("eval {}", spec_line(&m)), &e), format);
        }
        Command::Simulate { n, seed, lambda, endogeneity, instrument_strength, noise_sd, intercept, output } => {
            let mut base = MarketDGP::default();
            if let Some(b0) = intercept {
                base.coefficients.intercept = b0;
            }
            let dgp = MarketDGP {
                n,
                seed,
                lambda,
                endogeneity,
                instrument_strength: instrument_strength.unwrap_or(base.instrument_strength),
                noise_sd: noise_sd.unwrap_or(base.noise_sd),
                ..base
            };
            dgp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let market = simulate_market(&dgp).context("simulate")?;
            save_dataset(&output, &market.dataset)?;
            let r = Report::new("simulate", Some(n))
                .with("seed", json!(seed))
                .with("lambda", num(lambda))
                .with("endogeneity", num(endogeneity))
                .with("weights_digest", json!(weights_digest(&market.weights)))
                .with("output", json!(output.display().to_string()));
            emit(&r, format);
        }
        Command::Pipeline { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let dir = cfg.resolve_output_dir(out.as_deref());
            let outcome = run_pipeline(&cfg, &dir)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            let r = Report::new("pipeline", None)
                .with("output_dir", json!(outcome.output_dir.display().to_string()))
                .with("files", json!(outcome.files))
                .with("warnings", json!(outcome.warnings.len()));
            emit(&r, format);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("33.4,-117.7").unwrap(), [33.4, -117.7]);
        assert!(parse_point("33.4").is_err());
        assert!(hedonic_cli::config::parse_vce("cluster:kmeans_cluster").is_ok());
    }
}
