//! Property-sales table, derived columns and descriptive statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{point_distance, DistanceMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    SingleFamily,
    Condo,
    Townhomes,
    DuplexTriplex,
}

impl Style {
    pub const ALL: [Style; 4] = [Style::SingleFamily, Style::Condo, Style::Townhomes, Style::DuplexTriplex];

    pub fn column_name(self) -> &'static str {
        match self {
            Style::SingleFamily => "single_family",
            Style::Condo => "condo",
            Style::Townhomes => "townhomes",
            Style::DuplexTriplex => "duplex_triplex",
        }
    }

    /// Accepts the column names plus the listing labels used by real-estate
    /// exports ("Single Family Residential", "Condo/Co-op", ...).
    pub fn parse(s: &str) -> Option<Style> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "singlefamily" | "singlefamilyresidential" | "sfr" => Some(Style::SingleFamily),
            "condo" | "condocoop" | "condominium" => Some(Style::Condo),
            "townhomes" | "townhome" | "townhouse" | "townhouses" => Some(Style::Townhomes),
            "duplextriplex" | "duplex" | "triplex" | "multifamily24unit" => Some(Style::DuplexTriplex),
            _ => None,
        }
    }
}

impl core::fmt::Display for Style {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.column_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub house_id: u32,
    pub price: f64,
    pub sqft: f64,
    pub lot_sqft: f64,
    pub beds: f64,
    pub baths: f64,
    pub stories: f64,
    pub parking: f64,
    pub style: Style,
    pub zipcode: u32,
    pub year_built: i32,
    pub latitude: f64,
    pub longitude: f64,
    pub sale_year: i32,
    pub sale_month: u32,
    pub address: String,
}

impl PropertyRecord {
    pub fn validate(&self) -> core::result::Result<(), String> {
        let finite = [
            ("price", self.price),
            ("sqft", self.sqft),
            ("lot_sqft", self.lot_sqft),
            ("beds", self.beds),
            ("baths", self.baths),
            ("stories", self.stories),
            ("parking", self.parking),
            ("latitude", self.latitude),
            ("longitude", self.longitude),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name} is not finite"));
        }
        if self.house_id == 0 {
            return Err("house_id must be positive".into());
        }
        if self.price <= 0.0 {
            return Err(format!("price must be positive, got {}", self.price));
        }
        if self.sqft <= 0.0 {
            return Err(format!("sqft must be positive, got {}", self.sqft));
        }
        for (name, v) in [
            ("lot_sqft", self.lot_sqft),
            ("beds", self.beds),
            ("baths", self.baths),
            ("stories", self.stories),
            ("parking", self.parking),
        ] {
            if v < 0.0 {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(1..=12).contains(&self.sale_month) {
            return Err(format!("sale_month must be in 1..=12, got {}", self.sale_month));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(format!("latitude {} out of range", self.latitude));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(format!("longitude {} out of range", self.longitude));
        }
        Ok(())
    }
}

/// Month index with January 1960 as zero.
pub fn month_index(year: i32, month: u32) -> i64 {
    12 * (year as i64 - 1960) + month as i64 - 1
}

const BASE_COLUMNS: [&str; 16] = [
    "house_id",
    "price",
    "sqft",
    "lot_sqft",
    "beds",
    "baths",
    "stories",
    "parking",
    "zipcode",
    "year_built",
    "latitude",
    "longitude",
    "year",
    "month",
    "sale_year",
    "sale_month",
];

const MONTHS: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];

/// Columnar view over validated records plus named derived columns.
///
/// Derived columns may hold `NaN` for missing values; estimators apply
/// listwise deletion over the columns they use.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PropertyDataset {
    records: Vec<PropertyRecord>,
    derived: BTreeMap<String, Vec<f64>>,
}

impl PropertyDataset {
    /// Validates every record and drops repeated addresses (first occurrence
    /// wins). Returns the dataset and the input positions that were dropped.
    pub fn new(records: Vec<PropertyRecord>) -> Result<(Self, Vec<usize>)> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (row, r) in records.iter().enumerate() {
            r.validate().map_err(|reason| Error::InvalidRecord { row, reason })?;
        }
        let mut seen = BTreeSet::new();
        let mut kept = Vec::with_capacity(records.len());
        let mut dropped = Vec::new();
        for (row, r) in records.into_iter().enumerate() {
            if seen.insert(r.address.clone()) {
                kept.push(r);
            } else {
                dropped.push(row);
            }
        }
        let mut ids = BTreeSet::new();
        for (row, r) in kept.iter().enumerate() {
            if !ids.insert(r.house_id) {
                return Err(Error::InvalidRecord { row, reason: format!("duplicate house_id {}", r.house_id) });
            }
        }
        Ok((Self { records: kept, derived: BTreeMap::new() }, dropped))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PropertyRecord] {
        &self.records
    }

    pub fn derived(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.derived
    }

    pub fn has_column(&self, name: &str) -> bool {
        BASE_COLUMNS.contains(&name)
            || Style::ALL.iter().any(|s| s.column_name() == name)
            || self.derived.contains_key(name)
    }

    /// All column names usable in model specifications.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        names.extend(Style::ALL.iter().map(|s| s.column_name().to_string()));
        names.extend(self.derived.keys().cloned());
        names.sort();
        names.dedup();
        names
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        if let Some(c) = self.derived.get(name) {
            return Ok(c.clone());
        }
        let get = |f: fn(&PropertyRecord) -> f64| self.records.iter().map(f).collect();
        let col = match name {
            "house_id" => get(|r| r.house_id as f64),
            "price" => get(|r| r.price),
            "sqft" => get(|r| r.sqft),
            "lot_sqft" => get(|r| r.lot_sqft),
            "beds" => get(|r| r.beds),
            "baths" => get(|r| r.baths),
            "stories" => get(|r| r.stories),
            "parking" => get(|r| r.parking),
            "zipcode" => get(|r| r.zipcode as f64),
            "year_built" => get(|r| r.year_built as f64),
            "latitude" => get(|r| r.latitude),
            "longitude" => get(|r| r.longitude),
            "year" | "sale_year" => get(|r| r.sale_year as f64),
            "month" | "sale_month" => get(|r| r.sale_month as f64),
            other => match Style::ALL.iter().find(|s| s.column_name() == other) {
                Some(&style) => self.records.iter().map(|r| if r.style == style { 1.0 } else { 0.0 }).collect(),
                None => return Err(Error::MissingColumn(other.to_string())),
            },
        };
        Ok(col)
    }

    /// Adds or replaces a derived column.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.len()
            )));
        }
        if BASE_COLUMNS.contains(&name) {
            return Err(Error::InvalidArgument(format!("`{name}` is a base column")));
        }
        self.derived.insert(name.to_string(), values);
        Ok(())
    }

    /// Subset of rows, in the given order, carrying derived columns along.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let records = rows.iter().map(|&i| self.records[i].clone()).collect();
        let derived = self
            .derived
            .iter()
            .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i]).collect()))
            .collect();
        Self { records, derived }
    }

    pub fn mean_price(&self) -> f64 {
        self.records.iter().map(|r| r.price).sum::<f64>() / self.len() as f64
    }

    pub fn coordinates(&self) -> Vec<[f64; 2]> {
        self.records.iter().map(|r| [r.latitude, r.longitude]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveOptions {
    /// Sale price at or above which `pricedummy` is 1.
    pub price_threshold: f64,
    /// Reference coordinate (latitude, longitude) for `dist_pch`.
    pub reference: Option<[f64; 2]>,
    pub metric: DistanceMetric,
}

impl DeriveOptions {
    pub fn new(price_threshold: f64) -> Self {
        Self { price_threshold, reference: None, metric: DistanceMetric::DegreeEuclidean }
    }

    pub fn with_reference(mut self, latitude: f64, longitude: f64) -> Self {
        self.reference = Some([latitude, longitude]);
        self
    }
}

fn ln_column(values: &[f64], column: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(row, &v)| {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(Error::LogDomain { row, column: column.to_string(), value: v })
            }
        })
        .collect()
}

/// Adds the analysis columns: logs, distance to the reference point,
/// standardized coordinates, month index, `house_by_year`, the price
/// indicator and the style/month/year dummies.
pub fn derive_columns(ds: &PropertyDataset, opts: &DeriveOptions) -> Result<PropertyDataset> {
    let mut out = ds.clone();
    let recs = &ds.records;

    out.set_column("lnprice", ln_column(&ds.column("price")?, "price")?)?;
    out.set_column("lnsqft", ln_column(&ds.column("sqft")?, "sqft")?)?;

    if let Some(reference) = opts.reference {
        let dist: Vec<f64> = recs
            .iter()
            .map(|r| point_distance([r.latitude, r.longitude], reference, opts.metric))
            .collect();
        out.set_column("lndist_pch", ln_column(&dist, "dist_pch")?)?;
        out.set_column("dist_pch", dist)?;
    }

    if ds.len() >= 2 {
        out.set_column("std_latitude", standardize(&ds.column("latitude")?).map_err(|_| Error::ZeroVariance("latitude".into()))?)?;
        out.set_column("std_longitude", standardize(&ds.column("longitude")?).map_err(|_| Error::ZeroVariance("longitude".into()))?)?;
    }

    out.set_column("time", recs.iter().map(|r| month_index(r.sale_year, r.sale_month) as f64).collect())?;
    out.set_column("house_by_year", recs.iter().map(|r| r.house_id as f64 * r.sale_year as f64).collect())?;
    out.set_column(
        "pricedummy",
        recs.iter().map(|r| if r.price >= opts.price_threshold { 1.0 } else { 0.0 }).collect(),
    )?;

    for style in Style::ALL {
        out.set_column(style.column_name(), ds.column(style.column_name())?)?;
    }
    for (m, name) in MONTHS.iter().enumerate() {
        let m = m as u32 + 1;
        out.set_column(name, recs.iter().map(|r| if r.sale_month == m { 1.0 } else { 0.0 }).collect())?;
    }
    let years: BTreeSet<i32> = recs.iter().map(|r| r.sale_year).collect();
    for y in years {
        out.set_column(&format!("yr{y}"), recs.iter().map(|r| if r.sale_year == y { 1.0 } else { 0.0 }).collect())?;
    }
    Ok(out)
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = if x.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Z-scores with the sample (n - 1) standard deviation.
pub fn standardize(column: &[f64]) -> Result<Vec<f64>> {
    if column.len() < 2 {
        return Err(Error::InsufficientObservations { n: column.len(), params: 1 });
    }
    let (mean, sd) = mean_sd(column);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance("<column>".into()));
    }
    Ok(column.iter().map(|v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub columns: Vec<ColumnSummary>,
}

impl DescriptiveStats {
    pub fn get(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Summary statistics over the non-missing values of each column.
pub fn describe(ds: &PropertyDataset, columns: &[&str]) -> Result<DescriptiveStats> {
    let mut out = Vec::with_capacity(columns.len());
    for &name in columns {
        let values: Vec<f64> = ds.column(name)?.into_iter().filter(|v| !v.is_nan()).collect();
        out.push(summarize(name, &values));
    }
    Ok(DescriptiveStats { columns: out })
}

pub fn summarize(name: &str, values: &[f64]) -> ColumnSummary {
    if values.is_empty() {
        return ColumnSummary { name: name.to_string(), n: 0, mean: f64::NAN, sd: f64::NAN, min: f64::NAN, max: f64::NAN };
    }
    let (mean, sd) = mean_sd(values);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // a constant column has sd exactly 0 and its mean pinned to the value
    let (mean, sd) = if min == max { (min, 0.0) } else { (mean.clamp(min, max), sd) };
    ColumnSummary { name: name.to_string(), n: values.len(), mean, sd, min, max }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub n: usize,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }
}

/// Pearson correlations over rows complete in every listed column.
pub fn correlation_matrix(ds: &PropertyDataset, columns: &[&str]) -> Result<CorrelationMatrix> {
    let raw: Vec<Vec<f64>> = columns.iter().map(|c| ds.column(c)).collect::<Result<_>>()?;
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| raw.iter().all(|c| !c[i].is_nan())).collect();
    if keep.len() < 2 {
        return Err(Error::InsufficientObservations { n: keep.len(), params: 2 });
    }
    let cols: Vec<Vec<f64>> = raw.iter().map(|c| keep.iter().map(|&i| c[i]).collect()).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .zip(columns)
        .map(|(c, name)| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let d: Vec<f64> = c.iter().map(|v| v - m).collect();
            if d.iter().all(|v| *v == 0.0) {
                Err(Error::ZeroVariance(name.to_string()))
            } else {
                Ok(d)
            }
        })
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = centered.iter().map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let k = columns.len();
    let mut values = alloc::vec![alloc::vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = 1.0;
        for j in (i + 1)..k {
            let r = crate::linalg::dot(&centered[i], &centered[j]) / (norms[i] * norms[j]);
            let r = r.clamp(-1.0, 1.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { names: columns.iter().map(|s| s.to_string()).collect(), n: keep.len(), values })
}

/// Indicator columns for every level of `column` except the smallest
/// observed one (the base level). Names follow `<level>.<column>`.
pub fn indicator_columns(ds: &PropertyDataset, column: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let values = ds.column(column)?;
    let mut levels: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    Ok(levels
        .iter()
        .skip(1)
        .map(|&level| {
            let label = if level.fract() == 0.0 { format!("{}", level as i64) } else { format!("{level}") };
            let col = values
                .iter()
                .map(|&v| if v.is_nan() { f64::NAN } else if v == level { 1.0 } else { 0.0 })
                .collect();
            (format!("{label}.{column}"), col)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn record(id: u32, price: f64, year: i32, month: u32) -> PropertyRecord {
        PropertyRecord {
            house_id: id,
            price,
            sqft: 1500.0 + id as f64,
            lot_sqft: 4000.0,
            beds: 3.0,
            baths: 2.5,
            stories: 1.0,
            parking: 2.0,
            style: Style::SingleFamily,
            zipcode: 92629,
            year_built: 1980,
            latitude: 33.47 + id as f64 * 1e-3,
            longitude: -117.70 - id as f64 * 5e-4,
            sale_year: year,
            sale_month: month,
            address: format!("{id} Ocean Way"),
        }
    }

    #[test]
    fn month_index_anchors() {
        assert_eq!(month_index(1960, 1), 0);
        assert_eq!(month_index(2021, 8), 739);
        assert_eq!(month_index(2024, 5), 772);
    }

    #[test]
    fn derived_values() {
        let recs = vec![record(620, 380_000.0, 2023, 8), record(2, 32_000_000.0, 2021, 8), record(3, 2_875_487.0, 2024, 5)];
        let (ds, _) = PropertyDataset::new(recs).unwrap();
        let d = derive_columns(&ds, &DeriveOptions::new(2_875_487.0)).unwrap();
        assert_eq!(d.column("house_by_year").unwrap()[0], 1_254_260.0);
        assert_eq!(d.column("pricedummy").unwrap(), vec![0.0, 1.0, 1.0]);
        assert_eq!(d.column("time").unwrap(), vec![763.0, 739.0, 772.0]);
        assert_eq!(d.column("aug").unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(d.column("yr2021").unwrap(), vec![0.0, 1.0, 0.0]);
        let lnp = d.column("lnprice").unwrap();
        assert!((lnp[0] - 380_000f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_addresses_keep_first() {
        let mut b = record(2, 500_000.0, 2022, 1);
        b.address = "1 Ocean Way".into();
        let (ds, dropped) = PropertyDataset::new(vec![record(1, 400_000.0, 2022, 1), b]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(dropped, vec![1]);
        assert_eq!(ds.records()[0].price, 400_000.0);
    }

    #[test]
    fn invalid_month_rejected() {
        let err = PropertyDataset::new(vec![record(1, 1.0, 2022, 13)]).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { row: 0, .. }));
        assert_eq!(PropertyDataset::new(vec![]).unwrap_err(), Error::EmptyDataset);
    }

    #[test]
    fn standardize_basics() {
        let z = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
        assert!(matches!(standardize(&[5.0, 5.0, 5.0]), Err(Error::ZeroVariance(_))));
        let x = [3.2, -1.0, 8.5, 0.25, 4.0];
        let once = standardize(&x).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn describe_constant_and_unknown() {
        let recs = (1..=3).map(|i| record(i, 100_000.0 * i as f64, 2022, 3)).collect();
        let (ds, _) = PropertyDataset::new(recs).unwrap();
        let s = describe(&ds, &["beds"]).unwrap();
        assert_eq!(s.columns[0].sd, 0.0);
        assert_eq!(s.columns[0].mean, 3.0);
        assert!(matches!(describe(&ds, &["nope"]), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn correlation_signs() {
        let recs = (1..=5).map(|i| record(i, 100_000.0 * i as f64, 2022, 3)).collect();
        let (mut ds, _) = PropertyDataset::new(recs).unwrap();
        let x = ds.column("price").unwrap();
        ds.set_column("neg", x.iter().map(|v| -v).collect()).unwrap();
        let c = correlation_matrix(&ds, &["price", "neg"]).unwrap();
        assert_eq!(c.values[0][0], 1.0);
        assert!((c.values[0][1] + 1.0).abs() < 1e-15);
        assert!(matches!(correlation_matrix(&ds, &["price", "beds"]), Err(Error::ZeroVariance(ref c)) if c == "beds"));
    }

    #[test]
    fn ln_domain_error_names_row() {
        let recs = vec![record(1, 1.0, 2022, 3), record(2, 2.0, 2022, 3)];
        let (ds, _) = PropertyDataset::new(recs).unwrap();
        // reference equal to the first point gives a zero distance
        let opts = DeriveOptions::new(1.5).with_reference(33.471, -117.7005);
        let err = derive_columns(&ds, &opts).unwrap_err();
        assert!(matches!(err, Error::LogDomain { row: 0, .. }), "{err:?}");
    }
}
