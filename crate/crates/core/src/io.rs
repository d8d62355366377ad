//! File formats: series CSV, model JSON and small result tables.
//!
//! Series CSV has one row per time point and one column per node. A first row
//! with any non-numeric cell is taken as a header. Numbers are written with 17
//! significant digits (`{:.16e}`), which reads back to the same `f64`.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FittedModel, TimeSeriesMatrix, SCHEMA_VERSION};

/// Raw CSV table before any series validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub data: Array2<f64>,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Parses a numeric table. `Ingest { row, col }` points at the first cell that
/// is not a finite number, counting data rows from 0 after any header.
pub fn parse_csv<R: Read>(input: R) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut header = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut row = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        if line == 0 && record.iter().any(|c| parse_cell(c).is_none()) {
            header = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Format(format!(
                "row {row} has {} cells, expected {w}",
                record.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            match parse_cell(cell) {
                Some(v) if v.is_finite() => values.push(v),
                _ => return Err(Error::Ingest { row, col }),
            }
        }
        row += 1;
    }
    let cols = width.unwrap_or(0);
    let data = Array2::from_shape_vec((row, cols), values).map_err(|e| Error::Format(e.to_string()))?;
    Ok(CsvTable { header, data })
}

/// Parses and validates a series (at least 3 rows).
pub fn read_series<R: Read>(input: R) -> Result<TimeSeriesMatrix> {
    crate::model::validate_series(parse_csv(input)?.data)
}

/// Like [`read_series`] but accepts a 2-row window.
pub fn read_window<R: Read>(input: R) -> Result<TimeSeriesMatrix> {
    TimeSeriesMatrix::window(parse_csv(input)?.data)
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes a numeric table, optionally preceded by a header row.
pub fn write_csv<W: Write>(data: ArrayView2<'_, f64>, header: Option<&[String]>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(h) = header {
        if h.len() != data.ncols() {
            return Err(Error::Shape(format!(
                "{} header cells for {} columns",
                h.len(),
                data.ncols()
            )));
        }
        w.write_record(h).map_err(csv_err)?;
    }
    for row in data.rows() {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Header `node_0, node_1, ...`.
pub fn node_header(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("node_{j}")).collect()
}

/// `node_id,label`.
pub fn write_labels<W: Write>(labels: &[usize], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "label"]).map_err(csv_err)?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// `rank,node_id,row_sum`, ranks from 1.
pub fn write_ranking<W: Write>(ranking: &[(usize, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "node_id", "row_sum"]).map_err(csv_err)?;
    for (r, (i, s)) in ranking.iter().enumerate() {
        w.write_record([(r + 1).to_string(), i.to_string(), format_float(*s)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

/// Serialized model, newline terminated.
pub fn write_model(model: &FittedModel) -> Result<String> {
    let mut s = to_json(model)?;
    s.push('\n');
    Ok(s)
}

/// Parses a model and re-checks its invariants. Unknown fields and other
/// schema versions are rejected.
pub fn read_model(text: &str) -> Result<FittedModel> {
    let value: serde_json::Value = from_json(text)?;
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(Error::Format(format!("unsupported schema_version {v}"))),
        None => return Err(Error::Format("missing schema_version".into())),
    }
    let model: FittedModel = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
    model.validate()?;
    Ok(model)
}
