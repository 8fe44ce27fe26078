//! Reading and writing atomic measures.
//!
//! CSV files carry a header `x,weight` or `x,y,weight` and one atom per
//! row. JSON files hold `{"dim": 1|2, "points": [[...], ...], "weights": [...]}`.
//! The format is picked from the file extension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AtomicMeasure, MeasureError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad header {0:?}; expected `x,weight` or `x,y,weight`")]
    Header(Vec<String>),
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("unknown measure file extension for {0}; use .csv or .json")]
    Extension(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Serialize, Deserialize)]
struct JsonMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

pub fn read_csv<R: Read>(reader: R) -> Result<AtomicMeasure, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let dim = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "weight"] => 1,
        ["x", "y", "weight"] => 2,
        _ => return Err(IoError::Header(header)),
    };
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim + 1 {
            return Err(IoError::Row {
                line,
                msg: format!("expected {} fields, found {}", dim + 1, rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(dim + 1);
        for field in rec.iter() {
            vals.push(field.parse::<f64>().map_err(|e| IoError::Row {
                line,
                msg: format!("{field:?}: {e}"),
            })?);
        }
        weights.push(vals[dim]);
        coords.extend_from_slice(&vals[..dim]);
    }
    Ok(AtomicMeasure::new(dim, coords, weights)?)
}

pub fn write_csv<W: Write>(mu: &AtomicMeasure, writer: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    if mu.dim() == 1 {
        wtr.write_record(["x", "weight"])?;
    } else {
        wtr.write_record(["x", "y", "weight"])?;
    }
    for (p, w) in mu.atoms() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
        row.push(format!("{w:e}"));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_json<R: Read>(reader: R) -> Result<AtomicMeasure, IoError> {
    let raw: JsonMeasure = serde_json::from_reader(reader)?;
    let mut coords = Vec::with_capacity(raw.points.len() * raw.dim);
    for p in &raw.points {
        if p.len() != raw.dim {
            return Err(MeasureError::LengthMismatch {
                dim: raw.dim,
                points: p.len(),
                weights: 1,
            }
            .into());
        }
        coords.extend_from_slice(p);
    }
    Ok(AtomicMeasure::new(raw.dim, coords, raw.weights)?)
}

pub fn write_json<W: Write>(mu: &AtomicMeasure, writer: W) -> Result<(), IoError> {
    let raw = JsonMeasure {
        dim: mu.dim(),
        points: mu.atoms().map(|(p, _)| p.to_vec()).collect(),
        weights: mu.weights().to_vec(),
    };
    serde_json::to_writer(writer, &raw)?;
    Ok(())
}

fn extension(path: &Path) -> Result<String, IoError> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .filter(|e| e == "csv" || e == "json")
        .ok_or_else(|| IoError::Extension(path.display().to_string()))
}

pub fn read_measure(path: &Path) -> Result<AtomicMeasure, IoError> {
    let ext = extension(path)?;
    let reader = BufReader::new(File::open(path)?);
    if ext == "csv" {
        read_csv(reader)
    } else {
        read_json(reader)
    }
}

pub fn write_measure(mu: &AtomicMeasure, path: &Path) -> Result<(), IoError> {
    let ext = extension(path)?;
    let mut writer = BufWriter::new(File::create(path)?);
    if ext == "csv" {
        write_csv(mu, &mut writer)?;
    } else {
        write_json(mu, &mut writer)?;
    }
    writer.flush()?;
    Ok(())
}
