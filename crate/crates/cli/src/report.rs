//! Report emission and small file helpers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use covshift::experiments::Table;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?))),
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn label(path: Option<&Path>) -> PathBuf {
    path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf)
}

pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut out = open_out(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| io_error(&label(path), e))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| io_error(&label(path), e))
}

pub fn write_table(table: &Table, path: Option<&Path>) -> Result<(), CliError> {
    let out = open_out(path)?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| io_error(&label(path), e);
    w.write_record(&table.columns).map_err(err)?;
    for row in &table.rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| io_error(&label(path), e))
}

/// Writes `report` as pretty JSON or as its flat table. Field order follows
/// the report structure, so repeated runs give identical bytes.
pub fn emit_report<T: Serialize>(report: &T, table: &Table, path: Option<&Path>, format: Format) -> Result<(), CliError> {
    match format {
        Format::Json => write_json(report, path),
        Format::Csv => write_table(table, path),
    }
}

/// One-column numeric CSV. A non-numeric first row is taken as a header.
pub fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if rec.len() != 1 {
            return Err(CliError::usage(format!(
                "{}: row {} has {} fields, expected 1",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        match rec[0].trim().parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CliError::usage(format!(
                    "{}: row {}: `{}` is not a number",
                    path.display(),
                    i + 1,
                    &rec[0]
                )))
            }
        }
    }
    Ok(values)
}

pub fn write_column(path: &Path, header: &str, values: &[f64]) -> Result<(), CliError> {
    let table = Table {
        columns: vec![header.to_string()],
        rows: values.iter().map(|v| vec![covshift::experiments::fmt_f64(*v)]).collect(),
    };
    write_table(&table, Some(path))
}

/// JSON rendering of a single float: shortest round-trip digits, always with
/// a decimal point or exponent.
pub fn json_number(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}
