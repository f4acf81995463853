// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV matrices and JSON files.

use std::fs;
use std::io::Write;
use std::path::Path;

use covratio::spectrum::DataMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

/// Reads rows = time points, columns = variables. A first row with any
/// non-numeric field is taken as a header.
pub fn read_matrix(path: &Path) -> Result<DataMatrix, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix(&text).map_err(|msg| CliError::Data(format!("{}: {msg}", path.display())))
}

pub fn parse_matrix(text: &str) -> Result<DataMatrix, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {}: {e}", k + 1))?;
        let line = k + 1;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if k == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(format!("row {line}: expected {w} columns, found {}", record.len()));
            }
            _ => width = Some(record.len()),
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("row {line}, column {}: cannot parse {field:?} as a number", j + 1))?;
            if !v.is_finite() {
                return Err(format!("row {line}, column {}: non-finite value {field:?}", j + 1));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    DataMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

/// Shortest round-trip representation per entry, no header.
pub fn format_matrix(data: &DataMatrix) -> String {
    let mut out = String::with_capacity(data.n() * data.p() * 20);
    for i in 0..data.n() {
        for j in 0..data.p() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:?}", data.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `x` rounded to `digits` significant digits, trailing zeros dropped.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-6..=15).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let fixed = format!("{:.*}", decimals, x);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}
