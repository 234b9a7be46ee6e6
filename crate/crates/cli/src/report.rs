//! Rendering of fit and test results as aligned text, JSON and CSV.
//!
//! Every result is first converted into a [`Report`]: a spec line, the
//! observation count, an optional coefficient table and a flat map of
//! extra fields. JSON is the serde form of that struct; text renders the
//! same numbers at 6 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use hedonic_core::discrete::{BinaryFit, Classification, LrTest, MarginalEffect};
use hedonic_core::eval::EvalReport;
use hedonic_core::iv::{SarFit, WeakIvReport};
use hedonic_core::panel::{HausmanTest, ReFit};
use hedonic_core::regress::{stars, FitResult, FracPolyResult, StatKind, Vce};
use hedonic_core::spatial::{Anova, Bartlett};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// Non-finite values travel as JSON `null`.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    #[serde(with = "nullable")]
    pub coef: f64,
    #[serde(with = "nullable")]
    pub se: f64,
    #[serde(with = "nullable")]
    pub stat: f64,
    #[serde(with = "nullable")]
    pub p: f64,
    #[serde(with = "nullable")]
    pub ci_low: f64,
    #[serde(with = "nullable")]
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub spec: String,
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<CoefRow>,
    /// Header for the test-statistic column ("t" or "z").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stat_label: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// JSON number, or `null` when not finite.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

fn vce_label(v: &Vce) -> String {
    match v {
        Vce::Classical => "ols".into(),
        Vce::RobustHc1 => "robust".into(),
        Vce::Cluster(c) => format!("cluster {c}"),
    }
}

fn rows(names: &[String], coef: &[f64], se: &[f64], stat: &[f64], p: &[f64], lo: &[f64], hi: &[f64]) -> Vec<CoefRow> {
    (0..names.len())
        .map(|i| CoefRow {
            name: names[i].clone(),
            coef: coef[i],
            se: se[i],
            stat: stat[i],
            p: p[i],
            ci_low: lo[i],
            ci_high: hi[i],
        })
        .collect()
}

impl Report {
    pub fn new(spec: impl Into<String>, n: Option<usize>) -> Self {
        Report { spec: spec.into(), n, coefficients: Vec::new(), stat_label: None, extra: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.extra.insert(key.to_string(), value);
    }

    pub fn coefficient(&self, name: &str) -> Option<&CoefRow> {
        self.coefficients.iter().find(|r| r.name == name)
    }

    pub fn from_fit(spec: &str, fit: &FitResult) -> Self {
        let mut r = Report::new(spec, Some(fit.n));
        r.coefficients = rows(&fit.names, &fit.coef, &fit.se, &fit.stat, &fit.p, &fit.ci_low, &fit.ci_high);
        r.stat_label = Some(match fit.stat_kind {
            StatKind::T => "t".into(),
            StatKind::Z => "z".into(),
        });
        r.set("estimator", json!(fit.estimator));
        r.set("r2", num(fit.r2));
        r.set("aic", num(fit.aic));
        r.set("bic", num(fit.bic));
        r.set("rmse", num(fit.rmse));
        r.set("loglik", num(fit.loglik));
        r.set("df_resid", json!(fit.df_resid));
        r.set("vce", json!(vce_label(&fit.vce)));
        if let Some(w) = fit.r2_within {
            r.set("r2_within", num(w));
        }
        if fit.df_absorbed > 0 {
            r.set("df_absorbed", json!(fit.df_absorbed));
        }
        if let Some(g) = fit.n_clusters {
            r.set("n_clusters", json!(g));
        }
        if !fit.omitted.is_empty() {
            r.set("omitted", json!(fit.omitted));
        }
        r
    }

    pub fn from_sar(spec: &str, sar: &SarFit, weights_digest: &str) -> Self {
        Report::from_fit(spec, &sar.fit)
            .with("lambda", num(sar.lambda))
            .with("lambda_se", num(sar.lambda_se))
            .with("pseudo_r2", num(sar.pseudo_r2))
            .with("lambda_identified", json!(sar.lambda_identified))
            .with("lambda_out_of_range", json!(sar.lambda_out_of_range))
            .with("n_instruments", json!(sar.n_instruments))
            .with("weights_digest", json!(weights_digest))
    }

    pub fn from_binary(spec: &str, fit: &BinaryFit) -> Self {
        let mut r = Report::new(spec, Some(fit.n));
        r.coefficients = rows(&fit.names, &fit.coef, &fit.se, &fit.z, &fit.p, &fit.ci_low, &fit.ci_high);
        r.stat_label = Some("z".into());
        let k = fit.coef.len() as f64;
        let n = fit.n as f64;
        r.set("loglik", num(fit.loglik));
        r.set("loglik_null", num(fit.loglik_null));
        r.set("pseudo_r2", num(fit.pseudo_r2));
        r.set("lr_chi2", num(fit.lr_chi2));
        r.set("lr_df", json!(fit.lr_df));
        r.set("lr_p", num(fit.lr_p));
        r.set("aic", num(-2.0 * fit.loglik + 2.0 * k));
        r.set("bic", num(-2.0 * fit.loglik + k * n.ln()));
        r.set("iterations", json!(fit.iterations));
        r.set("converged", json!(fit.converged));
        r.set("gradient_max", num(fit.gradient_max));
        let mean_y = fit.actual.iter().sum::<f64>() / n;
        r.set("mean_dependent", num(mean_y));
        r
    }

    pub fn add_marginal_effects(&mut self, effects: &[MarginalEffect]) {
        let rows: Vec<Value> = effects
            .iter()
            .map(|m| json!({"name": m.name, "dydx": num(m.effect), "at": num(m.at)}))
            .collect();
        self.set("marginal_effects", Value::Array(rows));
    }

    pub fn add_classification(&mut self, c: &Classification) {
        let m = &c.metrics;
        let t = &c.table;
        self.set(
            "classification",
            json!({
                "threshold": num(c.threshold),
                "tp": t.tp, "fp": t.fp, "fn": t.fn_, "tn": t.tn,
                "sensitivity": opt(m.sensitivity),
                "specificity": opt(m.specificity),
                "ppv": opt(m.ppv),
                "npv": opt(m.npv),
                "false_pos_rate_true_neg": opt(m.false_pos_rate_true_neg),
                "false_neg_rate_true_pos": opt(m.false_neg_rate_true_pos),
                "false_pos_rate_classified_pos": opt(m.false_pos_rate_classified_pos),
                "false_neg_rate_classified_neg": opt(m.false_neg_rate_classified_neg),
                "accuracy": opt(m.accuracy),
            }),
        );
    }

    pub fn from_re(spec: &str, re: &ReFit) -> Self {
        let theta_min = re.theta.iter().copied().fold(f64::INFINITY, f64::min);
        let theta_max = re.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Report::from_fit(spec, &re.fit)
            .with("sigma_u", num(re.sigma_u))
            .with("sigma_e", num(re.sigma_e))
            .with("rho", num(re.sigma_u.powi(2) / (re.sigma_u.powi(2) + re.sigma_e.powi(2))))
            .with("theta_min", num(theta_min))
            .with("theta_max", num(theta_max))
            .with("sigma_u_clipped", json!(re.clipped))
    }

    pub fn from_fracpoly(spec: &str, fp: &FracPolyResult) -> Self {
        let evaluated = fp.candidates.iter().filter(|c| c.deviance.is_some()).count();
        Report::from_fit(spec, &fp.fit)
            .with("focus", json!(fp.focus))
            .with("scale", num(fp.scale))
            .with("powers", json!(fp.powers))
            .with("deviance", num(fp.deviance))
            .with("models_fit", json!(evaluated))
            .with("candidates", json!(fp.candidates.len()))
    }

    pub fn from_hausman(spec: &str, h: &HausmanTest) -> Self {
        Report::new(spec, None)
            .with("hausman", json!({"H": num(h.h), "df": h.df, "p": num(h.p)}))
            .with("compared", json!(h.names))
    }

    pub fn from_lr(spec: &str, lr: &LrTest) -> Self {
        Report::new(spec, None).with("chi2", num(lr.chi2)).with("df", json!(lr.df)).with("p", num(lr.p))
    }

    pub fn from_anova(spec: &str, a: &Anova) -> Self {
        Report::new(spec, Some(a.df_between + a.df_within + 1))
            .with("ss_between", num(a.ss_between))
            .with("ss_within", num(a.ss_within))
            .with("df_between", json!(a.df_between))
            .with("df_within", json!(a.df_within))
            .with("ms_between", num(a.ms_between))
            .with("ms_within", num(a.ms_within))
            .with("F", num(a.f))
            .with("p", num(a.p))
    }

    pub fn from_bartlett(spec: &str, b: &Bartlett) -> Self {
        Report::new(spec, None).with("chi2", num(b.chi2)).with("df", json!(b.df)).with("p", num(b.p))
    }

    pub fn from_weak_iv(spec: &str, w: &WeakIvReport) -> Self {
        let cvs: Vec<Value> = w
            .critical_values
            .iter()
            .map(|c| json!({"size": num(c.size), "critical_value": num(c.value)}))
            .collect();
        Report::new(spec, Some(w.n))
            .with("min_eigenvalue", num(w.stat))
            .with("n_endogenous", json!(w.n_endogenous))
            .with("n_instruments", json!(w.n_instruments))
            .with("df_denominator", json!(w.df_denominator))
            .with("critical_values", Value::Array(cvs))
            .with("selected_size", num(w.selected_size))
            .with("verdict", json!(w.conclusion))
    }

    pub fn from_eval(spec: &str, e: &EvalReport) -> Self {
        Report::new(spec, Some(e.n_test))
            .with("n_train", json!(e.n_train))
            .with("n_test", json!(e.n_test))
            .with("rmse", num(e.rmse))
            .with("mae", num(e.mae))
            .with("r2_test", opt(e.r2_test))
            .with("r2_ssr", opt(e.r2_ssr))
            .with("residual_mean", num(e.residual_mean))
            .with("residual_sd", num(e.residual_sd))
            .with("residual_skewness", opt(e.residual_skewness))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("report json: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.spec);
        if let Some(n) = self.n {
            let _ = writeln!(out, "Number of obs = {n}");
        }
        let width = self.extra.keys().map(String::len).max().unwrap_or(0);
        let mut nested = Vec::new();
        for (k, v) in &self.extra {
            match v {
                Value::Array(items) if items.iter().any(Value::is_object) => nested.push((k, v)),
                Value::Object(_) => nested.push((k, v)),
                _ => {
                    let _ = writeln!(out, "{k:<width$} = {}", scalar_text(v));
                }
            }
        }
        if !self.coefficients.is_empty() {
            out.push('\n');
            out.push_str(&self.coefficient_table());
        }
        for (k, v) in nested {
            let _ = writeln!(out, "\n{k}");
            match v {
                Value::Object(map) => {
                    let w = map.keys().map(String::len).max().unwrap_or(0);
                    for (kk, vv) in map {
                        let _ = writeln!(out, "  {kk:<w$} = {}", scalar_text(vv));
                    }
                }
                Value::Array(items) => out.push_str(&object_table(items)),
                _ => unreachable!(),
            }
        }
        out
    }

    fn coefficient_table(&self) -> String {
        let stat = self.stat_label.as_deref().unwrap_or("t");
        let header = vec![
            String::new(),
            "Coef.".into(),
            "St.Err.".into(),
            format!("{stat}-value"),
            "p-value".into(),
            "[95% Conf".into(),
            "Interval]".into(),
            "Sig".into(),
        ];
        let body: Vec<Vec<String>> = self
            .coefficients
            .iter()
            .map(|r| {
                vec![
                    r.name.clone(),
                    sig6(r.coef),
                    sig6(r.se),
                    sig6(r.stat),
                    sig6(r.p),
                    sig6(r.ci_low),
                    sig6(r.ci_high),
                    if r.p.is_finite() { stars(r.p).to_string() } else { String::new() },
                ]
            })
            .collect();
        let mut out = align(&header, &body);
        out.push_str("*** p<.01, ** p<.05, * p<.1\n");
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.coefficients.is_empty() {
            w.write_record(["field", "value"]).expect("in-memory write");
            for (k, v) in &self.extra {
                w.write_record([k.as_str(), &scalar_csv(v)]).expect("in-memory write");
            }
        } else {
            w.write_record(["name", "coef", "se", "stat", "p", "ci_low", "ci_high", "stars"]).expect("in-memory write");
            for r in &self.coefficients {
                let f = crate::io::format_value;
                w.write_record([
                    r.name.clone(),
                    f(r.coef),
                    f(r.se),
                    f(r.stat),
                    f(r.p),
                    f(r.ci_low),
                    f(r.ci_high),
                    if r.p.is_finite() { stars(r.p).to_string() } else { String::new() },
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_text(),
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Null => ".".into(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => sig6(f),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Array(items) => items.iter().map(scalar_text).collect::<Vec<_>>().join(" "),
        Value::Object(_) => "{..}".into(),
    }
}

fn scalar_csv(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(scalar_csv).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

fn object_table(items: &[Value]) -> String {
    let mut keys: Vec<String> = Vec::new();
    for item in items {
        if let Value::Object(m) = item {
            for k in m.keys() {
                if !keys.contains(k) {
                    keys.push(k.clone());
                }
            }
        }
    }
    let body: Vec<Vec<String>> = items
        .iter()
        .map(|item| keys.iter().map(|k| item.get(k).map_or(String::new(), scalar_text)).collect())
        .collect();
    align(&keys, &body)
}

/// Left-aligns the first column and right-aligns the rest.
fn align(header: &[String], body: &[Vec<String>]) -> String {
    let cols = header.len();
    let widths: Vec<usize> = (0..cols)
        .map(|j| body.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (j, c) in cells.iter().enumerate() {
            if j == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[j]);
            }
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let total: usize = widths.iter().sum::<usize>() + 2 * (cols.saturating_sub(1));
    let mut out = line(header);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in body {
        out.push_str(&line(r));
    }
    out
}

/// `%g`-style formatting with 6 significant digits.
pub fn sig6(v: f64) -> String {
    if v.is_nan() {
        return ".".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{v:.prec$}", prec = (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("ols lnprice lnsqft", Some(620));
        r.coefficients = vec![
            CoefRow { name: "lnsqft".into(), coef: 0.8123, se: 0.05, stat: 16.2, p: 0.004, ci_low: 0.7, ci_high: 0.9 },
            CoefRow { name: "_cons".into(), coef: 8.2, se: f64::NAN, stat: f64::NAN, p: 0.5, ci_low: 7.0, ci_high: 9.4 },
        ];
        r.stat_label = Some("t".into());
        r.with("r2", num(0.649)).with("aic", num(123.25)).with("bic", num(140.5))
    }

    #[test]
    fn stars_follow_thresholds() {
        let text = sample().to_text();
        let lnsqft = text.lines().find(|l| l.starts_with("lnsqft")).unwrap();
        assert!(lnsqft.ends_with("***"), "{lnsqft}");
        let cons = text.lines().find(|l| l.starts_with("_cons")).unwrap();
        assert!(!cons.contains('*'), "{cons}");
    }

    #[test]
    fn json_round_trips() {
        let r = sample();
        let back = Report::from_json(&r.to_json()).unwrap();
        assert_eq!(back.spec, r.spec);
        assert_eq!(back.extra, r.extra);
        assert_eq!(back.coefficients[0], r.coefficients[0]);
        assert!(back.coefficients[1].se.is_nan());
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["spec", "n", "coefficients", "r2", "aic", "bic"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn text_matches_json_at_six_digits() {
        let r = sample();
        let text = r.to_text();
        assert!(text.contains("r2  = 0.649"));
        assert!(text.contains("0.8123"));
        assert!(text.contains("aic = 123.25"));
    }

    #[test]
    fn sig6_formats_like_printf_g() {
        assert_eq!(sig6(80.6805), "80.6805");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(999999.7), "1e+06");
        assert_eq!(sig6(-2.5e-7), "-2.5e-07");
        assert_eq!(sig6(16.38), "16.38");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(100000.0), "100000");
    }

    #[test]
    fn csv_has_one_row_per_coefficient() {
        let csv = sample().to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().ends_with(",***"));
    }
}
