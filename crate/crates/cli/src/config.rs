//! Pipeline configuration, read from a sectioned TOML file.
//!
//! ```toml
//! seed = 20240501
//!
//! [data]
//! input = "sales.csv"
//! reference = [33.436, -117.736]
//!
//! [cluster]
//! k = 3
//!
//! [[model]]
//! name = "hedonic"
//! kind = "areg"
//! y = "lnprice"
//! x = ["lnsqft", "beds", "baths"]
//! absorb = "kmeans_cluster"
//! vce = "cluster:kmeans_cluster"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use hedonic_core::eval::{MarketDGP, SplitMethod};
use hedonic_core::iv::IvSpec;
use hedonic_core::regress::{ModelSpec, Vce};
use hedonic_core::spatial::{DistanceMetric, Linkage};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{ColumnMap, FIELDS};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HEDONIC_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for every stochastic step (k-means starts, train/test split).
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub cluster: Option<ClusterConfig>,
    #[serde(default)]
    pub weights: Option<WeightsConfig>,
    #[serde(default, rename = "model")]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub tests: TestsConfig,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV input, relative to the config file.
    pub input: Option<PathBuf>,
    /// Synthetic market used in place of `input`.
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    /// Latitude and longitude of the distance reference point.
    pub reference: Option<[f64; 2]>,
    #[serde(default)]
    pub metric: DistanceMetric,
    /// Defaults to the mean sale price.
    pub price_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub endogeneity: f64,
    pub instrument_strength: Option<f64>,
    pub noise_sd: Option<f64>,
    pub intercept: Option<f64>,
}

impl SyntheticConfig {
    pub fn dgp(&self, seed: u64) -> MarketDGP {
        let mut base = MarketDGP::default();
        if let Some(b0) = self.intercept {
            base.coefficients.intercept = b0;
        }
        MarketDGP {
            n: self.n,
            lambda: self.lambda,
            endogeneity: self.endogeneity,
            instrument_strength: self.instrument_strength.unwrap_or(base.instrument_strength),
            noise_sd: self.noise_sd.unwrap_or(base.noise_sd),
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinates {
    #[default]
    Standardized,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    #[serde(default = "default_linkage")]
    pub linkage: Linkage,
    #[serde(default)]
    pub coordinates: Coordinates,
    /// Column compared across k-means clusters by ANOVA and Bartlett.
    #[serde(default = "default_test_column")]
    pub test_column: String,
}

fn default_linkage() -> Linkage {
    Linkage::Ward
}

fn default_test_column() -> String {
    "lnprice".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// Neighbour cutoff in degrees; defaults to the median pairwise distance.
    pub cutoff: Option<f64>,
    #[serde(default = "yes")]
    pub row_standardize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Areg,
    #[serde(rename = "2sls")]
    Tsls,
    Sar,
    Logit,
    Probit,
    Fe,
    Re,
    Fracpoly,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Areg => "areg",
            ModelKind::Tsls => "2sls",
            ModelKind::Sar => "sar",
            ModelKind::Logit => "logit",
            ModelKind::Probit => "probit",
            ModelKind::Fe => "fe",
            ModelKind::Re => "re",
            ModelKind::Fracpoly => "fracpoly",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub kind: ModelKind,
    pub y: String,
    #[serde(default)]
    pub x: Vec<String>,
    /// `endogenous=instrument[+instrument...]`
    #[serde(default)]
    pub iv: Vec<String>,
    pub absorb: Option<String>,
    /// `ols`, `robust` or `cluster:<column>`.
    pub vce: Option<String>,
    /// Panel unit column for `fe` and `re`.
    pub unit: Option<String>,
    /// Fractional-polynomial focus variable and its scale divisor.
    pub focus: Option<String>,
    pub scale: Option<f64>,
    /// Probability cutoff of the classification table.
    pub threshold: Option<f64>,
    #[serde(default = "yes")]
    pub intercept: bool,
}

/// Parses `endo=instr1+instr2` clauses into endogenous and instrument lists.
pub fn parse_iv(clauses: &[String]) -> Result<(Vec<String>, Vec<String>), String> {
    let mut endo = Vec::new();
    let mut instr = Vec::new();
    for clause in clauses {
        let (e, z) = clause
            .split_once('=')
            .ok_or_else(|| format!("iv clause `{clause}` must look like endogenous=instrument"))?;
        let e = e.trim();
        if e.is_empty() {
            return Err(format!("iv clause `{clause}` has no endogenous variable"));
        }
        let zs: Vec<String> = z.split('+').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if zs.is_empty() {
            return Err(format!("iv clause `{clause}` has no instrument"));
        }
        endo.push(e.to_string());
        for z in zs {
            if !instr.contains(&z) {
                instr.push(z);
            }
        }
    }
    Ok((endo, instr))
}

pub fn parse_vce(s: &str) -> Result<Vce, String> {
    match s.trim() {
        "ols" | "classical" | "" => Ok(Vce::Classical),
        "robust" | "hc1" => Ok(Vce::RobustHc1),
        other => match other.strip_prefix("cluster:").or_else(|| other.strip_prefix("cluster ")) {
            Some(col) if !col.trim().is_empty() => Ok(Vce::Cluster(col.trim().to_string())),
            _ => Err(format!("vce `{other}` must be ols, robust or cluster:<column>")),
        },
    }
}

impl ModelConfig {
    pub fn vce(&self) -> Vce {
        self.vce.as_deref().map(|v| parse_vce(v).unwrap_or_default()).unwrap_or_default()
    }

    pub fn model_spec(&self) -> ModelSpec {
        let x: Vec<&str> = self.x.iter().map(String::as_str).collect();
        let mut spec = ModelSpec::new(&self.y, &x).with_vce(self.vce());
        if !self.intercept {
            spec = spec.without_intercept();
        }
        if let Some(a) = &self.absorb {
            spec = spec.absorbing(a);
        }
        spec
    }

    pub fn iv_spec(&self) -> IvSpec {
        let (endo, instr) = parse_iv(&self.iv).unwrap_or_default();
        let mut spec = IvSpec {
            response: self.y.clone(),
            endogenous: endo,
            instruments: instr,
            exogenous: self.x.clone(),
            intercept: self.intercept,
        };
        spec.exogenous.retain(|x| !spec.endogenous.contains(x));
        spec
    }

    /// Columns the model reads, with `i.` prefixes stripped.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec![self.y.clone()];
        cols.extend(self.x.iter().map(|x| x.strip_prefix("i.").unwrap_or(x).to_string()));
        if let Ok((e, z)) = parse_iv(&self.iv) {
            cols.extend(e);
            cols.extend(z);
        }
        cols.extend(self.absorb.iter().cloned());
        cols.extend(self.unit.iter().cloned());
        cols.extend(self.focus.iter().cloned());
        if let Vce::Cluster(c) = self.vce() {
            cols.push(c);
        }
        let mut seen = BTreeSet::new();
        cols.retain(|c| seen.insert(c.clone()));
        cols
    }

    /// Appends every problem found in this model definition.
    pub fn problems(&self, out: &mut Vec<String>) {
        let at = format!("model `{}`", self.name);
        if self.y.trim().is_empty() {
            out.push(format!("{at}: `y` is empty"));
        }
        if let Some(v) = &self.vce {
            if let Err(e) = parse_vce(v) {
                out.push(format!("{at}: {e}"));
            }
        }
        if let Err(e) = parse_iv(&self.iv) {
            out.push(format!("{at}: {e}"));
        }
        let needs_iv = matches!(self.kind, ModelKind::Tsls);
        if needs_iv && self.iv.is_empty() {
            out.push(format!("{at}: kind 2sls needs at least one `iv` clause"));
        }
        if !needs_iv && self.kind != ModelKind::Sar && !self.iv.is_empty() {
            out.push(format!("{at}: `iv` is only used by 2sls and sar"));
        }
        match self.kind {
            ModelKind::Areg if self.absorb.is_none() => out.push(format!("{at}: kind areg needs `absorb`")),
            ModelKind::Fe | ModelKind::Re if self.unit.is_none() => {
                out.push(format!("{at}: kind {} needs `unit`", self.kind.label()))
            }
            ModelKind::Fracpoly if self.focus.is_none() => out.push(format!("{at}: kind fracpoly needs `focus`")),
            _ => {}
        }
        if self.absorb.is_some() && !matches!(self.kind, ModelKind::Areg | ModelKind::Ols) {
            out.push(format!("{at}: `absorb` is only used by ols/areg"));
        }
        if self.x.is_empty() && !matches!(self.kind, ModelKind::Logit | ModelKind::Probit | ModelKind::Fracpoly) {
            out.push(format!("{at}: `x` is empty"));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0) {
                out.push(format!("{at}: scale must be positive, got {s}"));
            }
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t < 1.0) {
                out.push(format!("{at}: threshold must be in (0, 1), got {t}"));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestsConfig {
    /// Name of a 2sls model whose instruments are tested.
    pub weak_iv: Option<String>,
    /// Pairs of (unrestricted, restricted) binary models.
    #[serde(default)]
    pub lrtest: Vec<[String; 2]>,
    /// (fe model, re model).
    pub hausman: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Name of an ols model refit on the training rows.
    pub model: String,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default)]
    pub method: SplitKind,
}

fn default_train_frac() -> f64 {
    0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    #[default]
    Bernoulli,
    ExactCount,
}

impl From<SplitKind> for SplitMethod {
    fn from(k: SplitKind) -> Self {
        match k {
            SplitKind::Bernoulli => SplitMethod::Bernoulli,
            SplitKind::ExactCount => SplitMethod::ExactCount,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string().trim_end().to_string()]))
    }

    /// Reads and validates a config; a relative `data.input` is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(input) = &cfg.data.input {
            if input.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.data.input = Some(base.join(input));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self, name: &str) -> Option<&ModelConfig> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn column_map(&self) -> ColumnMap {
        ColumnMap(self.data.columns.clone())
    }

    /// Checks everything that does not need the data; reports every problem.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut p = Vec::new();
        let stochastic = self.cluster.is_some() || self.eval.is_some() || self.data.synthetic.is_some();
        if stochastic && self.seed.is_none() {
            p.push("`seed` is required when clustering, evaluation or synthetic data are configured".into());
        }
        match (&self.data.input, &self.data.synthetic) {
            (None, None) => p.push("data: set `input` or `[data.synthetic]`".into()),
            (Some(_), Some(_)) => p.push("data: `input` and `[data.synthetic]` are mutually exclusive".into()),
            _ => {}
        }
        if let Some(s) = &self.data.synthetic {
            if let Err(e) = s.dgp(self.seed.unwrap_or(0)).validate() {
                p.push(format!("data.synthetic: {e}"));
            }
        }
        for f in ColumnMap(self.data.columns.clone()).unknown_fields() {
            p.push(format!("data.columns: `{f}` is not a record field (expected one of {})", FIELDS.join(", ")));
        }
        if let Some([lat, lon]) = self.data.reference {
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                p.push(format!("data.reference: ({lat}, {lon}) is not a valid coordinate"));
            }
        }
        if let Some(t) = self.data.price_threshold {
            if !(t > 0.0) {
                p.push(format!("data.price_threshold must be positive, got {t}"));
            }
        }
        if let Some(c) = &self.cluster {
            if c.k < 1 {
                p.push("cluster.k must be at least 1".into());
            }
        }
        if let Some(w) = &self.weights {
            if let Some(c) = w.cutoff {
                if !(c > 0.0) {
                    p.push(format!("weights.cutoff must be positive, got {c}"));
                }
            }
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                p.push(format!("model `{}` is defined twice", m.name));
            }
            m.problems(&mut p);
            if m.kind == ModelKind::Sar && self.weights.is_none() {
                p.push(format!("model `{}`: kind sar needs a `[weights]` section", m.name));
            }
        }
        let mut need = |name: &str, what: &str, kinds: &[ModelKind]| match self.model(name) {
            None => p.push(format!("{what}: no model named `{name}`")),
            Some(m) if !kinds.contains(&m.kind) => {
                let allowed: Vec<&str> = kinds.iter().map(|k| k.label()).collect();
                p.push(format!("{what}: model `{name}` has kind {}, expected {}", m.kind.label(), allowed.join("/")))
            }
            _ => {}
        };
        if let Some(w) = &self.tests.weak_iv {
            need(w, "tests.weak_iv", &[ModelKind::Tsls]);
        }
        for [u, r] in &self.tests.lrtest {
            need(u, "tests.lrtest", &[ModelKind::Logit, ModelKind::Probit]);
            need(r, "tests.lrtest", &[ModelKind::Logit, ModelKind::Probit]);
        }
        if let Some([fe, re]) = &self.tests.hausman {
            need(fe, "tests.hausman", &[ModelKind::Fe]);
            need(re, "tests.hausman", &[ModelKind::Re]);
        }
        if let Some(e) = &self.eval {
            need(&e.model, "eval.model", &[ModelKind::Ols]);
            if !(e.train_frac > 0.0 && e.train_frac < 1.0) {
                p.push(format!("eval.train_frac must be in (0, 1), got {}", e.train_frac));
            }
            if self.model(&e.model).is_some_and(|m| m.absorb.is_some()) {
                p.push(format!("eval.model: `{}` absorbs groups and cannot predict new rows", e.model));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p))
        }
    }

    /// Output directory: the explicit override, then the config, then the
    /// environment, then `./hedonic-out`.
    pub fn resolve_output_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("hedonic-out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
seed = 7
[data]
synthetic = { n = 100 }
reference = [33.436, -117.736]
[cluster]
k = 3
[weights]
cutoff = 0.004
[[model]]
name = "hedonic"
kind = "areg"
y = "lnprice"
x = ["lnsqft", "beds"]
absorb = "kmeans_cluster"
vce = "cluster:kmeans_cluster"
[[model]]
name = "iv"
kind = "2sls"
y = "lnprice"
x = ["beds"]
iv = ["lnsqft=parking"]
[tests]
weak_iv = "iv"
"#;

    #[test]
    fn good_config_validates() {
        let cfg = PipelineConfig::from_toml(GOOD).unwrap();
        cfg.validate().unwrap();
        let m = cfg.model("hedonic").unwrap();
        assert_eq!(m.vce(), Vce::Cluster("kmeans_cluster".into()));
        assert_eq!(m.columns(), vec!["lnprice", "lnsqft", "beds", "kmeans_cluster"]);
        let iv = cfg.model("iv").unwrap().iv_spec();
        assert_eq!(iv.endogenous, vec!["lnsqft"]);
        assert_eq!(iv.instruments, vec!["parking"]);
    }

    #[test]
    fn every_problem_is_listed() {
        let bad = r#"
[data]
input = "x.csv"
columns = { prize = "PRICE" }
[cluster]
k = 0
[[model]]
name = "a"
kind = "2sls"
y = "lnprice"
x = ["beds"]
vce = "sandwich"
[[model]]
name = "a"
kind = "fe"
y = "lnprice"
x = ["beds"]
[tests]
hausman = ["a", "missing"]
[eval]
model = "a"
train_frac = 1.5
"#;
        let err = PipelineConfig::from_toml(bad).unwrap().validate().unwrap_err();
        let CliError::Config(problems) = err else { panic!("expected config error") };
        let all = problems.join("\n");
        for needle in [
            "`seed` is required",
            "`prize`",
            "cluster.k",
            "vce `sandwich`",
            "needs at least one `iv`",
            "defined twice",
            "needs `unit`",
            "no model named `missing`",
            "train_frac",
        ] {
            assert!(all.contains(needle), "missing {needle:?} in\n{all}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml("seed = 1\nsede = 2\n[data]\ninput = \"a\"\n").unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
    }

    #[test]
    fn iv_clause_parsing() {
        let (e, z) = parse_iv(&["lnsqft=parking+lot_sqft".into()]).unwrap();
        assert_eq!((e, z), (vec!["lnsqft".to_string()], vec!["parking".to_string(), "lot_sqft".to_string()]));
        assert!(parse_iv(&["lnsqft".into()]).is_err());
        assert!(parse_iv(&["=parking".into()]).is_err());
    }
}
