//! CSV ingestion and export of property datasets.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use hedonic_core::{PropertyDataset, PropertyRecord, Style};

use crate::error::CliError;

/// Canonical field names of a property record, in export order.
pub const FIELDS: [&str; 16] = [
    "house_id",
    "price",
    "sqft",
    "lot_sqft",
    "beds",
    "baths",
    "stories",
    "parking",
    "style",
    "zipcode",
    "year_built",
    "latitude",
    "longitude",
    "sale_year",
    "sale_month",
    "address",
];

/// Maps canonical field names to CSV headers. Unmapped fields use their
/// canonical name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnMap(pub BTreeMap<String, String>);

impl ColumnMap {
    pub fn header_for<'a>(&'a self, field: &'a str) -> &'a str {
        self.0.get(field).map(String::as_str).unwrap_or(field)
    }

    /// Keys that are not record fields.
    pub fn unknown_fields(&self) -> Vec<String> {
        self.0.keys().filter(|k| !FIELDS.contains(&k.as_str())).cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub dataset: PropertyDataset,
    /// 1-based data rows rejected by record validation, with the reason.
    pub rejected: Vec<(usize, String)>,
    /// 1-based data rows dropped as repeated addresses.
    pub duplicates: Vec<usize>,
    /// Extra columns that were not numeric and were skipped.
    pub ignored: Vec<String>,
}

pub fn load_csv(path: &Path, map: &ColumnMap) -> Result<LoadReport, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, map).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_field<T: std::str::FromStr>(token: &str, row: usize, column: &str) -> Result<T, CliError> {
    token
        .trim()
        .parse()
        .map_err(|_| CliError::Data(format!("row {row}, column `{column}`: cannot parse {token:?}")))
}

/// Reads records from CSV. Numeric columns beyond the record fields are
/// kept as derived columns (empty cells become missing values).
pub fn read_csv<R: Read>(reader: R, map: &ColumnMap) -> Result<LoadReport, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Data(format!("header: {e}")))?.clone();
    let position = |h: &str| headers.iter().position(|c| c == h);

    let missing: Vec<String> = FIELDS
        .iter()
        .filter(|f| position(map.header_for(f)).is_none())
        .map(|f| match map.header_for(f) {
            h if h == *f => format!("`{f}`"),
            h => format!("`{h}` (mapped from `{f}`)"),
        })
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!("missing column(s): {}", missing.join(", "))));
    }
    let idx: Vec<usize> = FIELDS.iter().map(|f| position(map.header_for(f)).unwrap()).collect();
    let extras: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !idx.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut records = Vec::new();
    let mut source_rows = Vec::new();
    let mut extra_values: Vec<Vec<f64>> = vec![Vec::new(); extras.len()];
    let mut numeric = vec![true; extras.len()];
    let mut rejected = Vec::new();

    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CliError::Data(format!("row {row_no}: {e}")))?;
        let cell = |f: usize| row.get(idx[f]).unwrap_or("");
        if let Some(f) = (0..FIELDS.len()).find(|&f| cell(f).is_empty()) {
            rejected.push((row_no, format!("missing `{}`", FIELDS[f])));
            continue;
        }
        let col = |f: usize| map.header_for(FIELDS[f]).to_string();
        let num = |f: usize| parse_field::<f64>(cell(f), row_no, &col(f));
        let style = Style::parse(cell(8))
            .ok_or_else(|| CliError::Data(format!("row {row_no}, column `{}`: unknown style {:?}", col(8), cell(8))))?;
        let record = PropertyRecord {
            house_id: parse_field(cell(0), row_no, &col(0))?,
            price: num(1)?,
            sqft: num(2)?,
            lot_sqft: num(3)?,
            beds: num(4)?,
            baths: num(5)?,
            stories: num(6)?,
            parking: num(7)?,
            style,
            zipcode: parse_field(cell(9), row_no, &col(9))?,
            year_built: parse_field(cell(10), row_no, &col(10))?,
            latitude: num(11)?,
            longitude: num(12)?,
            sale_year: parse_field(cell(13), row_no, &col(13))?,
            sale_month: parse_field(cell(14), row_no, &col(14))?,
            address: cell(15).to_string(),
        };
        if let Err(reason) = record.validate() {
            rejected.push((row_no, reason));
            continue;
        }
        for (j, (pos, _)) in extras.iter().enumerate() {
            let token = row.get(*pos).unwrap_or("");
            let v = if token.is_empty() { Ok(f64::NAN) } else { token.parse::<f64>() };
            match v {
                Ok(v) => extra_values[j].push(v),
                Err(_) => {
                    numeric[j] = false;
                    extra_values[j].push(f64::NAN);
                }
            }
        }
        records.push(record);
        source_rows.push(row_no);
    }
    if records.is_empty() {
        return Err(CliError::Data(if rejected.is_empty() {
            "no data rows".into()
        } else {
            format!("no valid data rows ({} rejected)", rejected.len())
        }));
    }

    let (mut dataset, dropped) = PropertyDataset::new(records).map_err(|e| CliError::Data(e.to_string()))?;
    let kept: Vec<usize> = (0..source_rows.len()).filter(|i| dropped.binary_search(i).is_err()).collect();
    let mut ignored = Vec::new();
    for (j, (_, name)) in extras.iter().enumerate() {
        if !numeric[j] {
            ignored.push(name.clone());
            continue;
        }
        let values = kept.iter().map(|&i| extra_values[j][i]).collect();
        dataset
            .set_column(name, values)
            .map_err(|e| CliError::Data(format!("column `{name}`: {e}")))?;
    }
    Ok(LoadReport {
        dataset,
        rejected,
        duplicates: dropped.iter().map(|&i| source_rows[i]).collect(),
        ignored,
    })
}

/// Shortest representation that parses back to the same `f64`; missing
/// values are written as empty cells.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes record fields followed by every derived column.
pub fn write_csv<W: Write>(writer: W, ds: &PropertyDataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    let derived: Vec<(&String, &Vec<f64>)> = ds
        .derived()
        .iter()
        .filter(|(k, _)| !FIELDS.contains(&k.as_str()))
        .collect();
    let header: Vec<&str> = FIELDS.iter().copied().chain(derived.iter().map(|(k, _)| k.as_str())).collect();
    let csv_err = |e: csv::Error| CliError::Data(format!("csv write: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in ds.records().iter().enumerate() {
        let mut row = vec![
            r.house_id.to_string(),
            format_value(r.price),
            format_value(r.sqft),
            format_value(r.lot_sqft),
            format_value(r.beds),
            format_value(r.baths),
            format_value(r.stories),
            format_value(r.parking),
            r.style.column_name().to_string(),
            r.zipcode.to_string(),
            r.year_built.to_string(),
            format_value(r.latitude),
            format_value(r.longitude),
            r.sale_year.to_string(),
            r.sale_month.to_string(),
            r.address.clone(),
        ];
        row.extend(derived.iter().map(|(_, col)| format_value(col[i])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("csv write: {e}")))?;
    Ok(())
}

pub fn save_csv(path: &Path, ds: &PropertyDataset) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), ds)
}

/// Plot-ready series: one column per name.
pub fn write_series<W: Write>(writer: W, columns: &[(&str, &[f64])]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| CliError::Data(format!("csv write: {e}"));
    w.write_record(columns.iter().map(|(n, _)| *n)).map_err(csv_err)?;
    let n = columns.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..n {
        w.write_record(columns.iter().map(|(_, c)| c.get(i).map_or(String::new(), |v| format_value(*v))))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("csv write: {e}")))?;
    Ok(())
}
