use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{CliError, Result};

/// A parsed numeric CSV: header names plus a dense value matrix in file
/// order.
#[derive(Debug)]
pub struct Table {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Finds every listed column, or reports all the missing ones at once.
    pub fn require_columns(&self, names: &[String], kind: &str) -> Result<Vec<usize>> {
        let mut indices = Vec::with_capacity(names.len());
        let mut missing = Vec::new();
        for name in names {
            match self.column_index(name) {
                Some(idx) => indices.push(idx),
                None => missing.push(name.as_str()),
            }
        }
        if !missing.is_empty() {
            return Err(CliError::Input(format!(
                "missing {kind} column(s): {}",
                missing.join(", ")
            )));
        }
        Ok(indices)
    }

    /// Copies the listed columns, in the listed order.
    pub fn gather(&self, indices: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((self.values.nrows(), indices.len()), |(i, j)| {
            self.values[[i, indices[j]]]
        })
    }
}

/// Reads a comma-separated file with a required header row; every data cell
/// must parse as a number. Errors carry the 1-based line number.
///
/// The file is pulled into memory and CRLF terminators are normalized first:
/// the parser under-reports line numbers by one on CRLF input, and the files
/// here are small enough that exact error positions are worth a copy.
pub fn read_table(path: &Path) -> Result<Table> {
    let shown = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| CliError::input(&shown, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Input(format!("{shown}: not valid UTF-8")))?;
    let text = text.replace("\r\n", "\n");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::input(&shown, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() {
        return Err(CliError::Input(format!("{shown}: empty header row")));
    }
    for (j, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(CliError::Input(format!("{shown}: column {} has no name", j + 1)));
        }
        if names[..j].contains(name) {
            return Err(CliError::Input(format!("{shown}: duplicate column '{name}'")));
        }
    }

    let width = names.len();
    let mut cells: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(&shown, e))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(idx as u64 + 2);
        if record.len() != width {
            return Err(CliError::Input(format!(
                "{shown}: line {line}: expected {width} fields, found {}",
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                CliError::Input(format!(
                    "{shown}: line {line}: column '{}': cannot parse '{cell}' as a number",
                    names[j]
                ))
            })?;
            cells.push(value);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Input(format!("{shown}: no data rows")));
    }
    let values = Array2::from_shape_vec((rows, width), cells)
        .map_err(|e| CliError::Input(format!("{shown}: {e}")))?;
    Ok(Table { names, values })
}

/// Shortest decimal representation that parses back to the same value.
pub fn fmt_float(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let shown = path.display().to_string();
    let file = File::create(path).map_err(|e| CliError::input(&shown, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(header)
        .map_err(|e| CliError::input(&shown, e))?;
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| CliError::input(&shown, e))?;
    }
    writer.flush().map_err(|e| CliError::input(&shown, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let shown = path.display().to_string();
    let body = serde_json::to_string_pretty(value).map_err(|e| CliError::input(&shown, e))?;
    let mut file = File::create(path).map_err(|e| CliError::input(&shown, e))?;
    file.write_all(body.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| CliError::input(&shown, e))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| CliError::input(&shown, e))?;
    serde_json::from_reader(file).map_err(|e| CliError::input(&shown, e))
}
