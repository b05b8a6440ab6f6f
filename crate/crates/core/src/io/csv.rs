//! Comma-separated data sets: feature columns plus one response column.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::Dataset;

use super::{io_err, write_string};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Zero-based response column; `None` means the last column.
    pub response_column: Option<usize>,
    /// Map feature columns holding only `0`/`1` to `-1`/`+1`.
    pub binary_to_pm1: bool,
    /// Expected number of feature columns, checked when set.
    pub expected_dim: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            response_column: None,
            binary_to_pm1: false,
            expected_dim: None,
        }
    }
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset<f64>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_csv(file, options)
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<Dataset<f64>> {
    let (rows, width) = read_rows(reader, options)?;
    if width < 2 {
        return Err(Error::Csv {
            line: 1,
            message: "need at least one feature column and a response column".into(),
        });
    }
    let (inputs, responses) = assemble(&rows, width, options.response_column.unwrap_or(width - 1), options)?;
    Dataset::new(inputs, responses)
}

/// Like [`load_csv`], but a file with exactly `dim` columns is read as
/// features only and yields no responses.
pub fn load_inputs(path: &Path, options: &CsvOptions, dim: usize) -> Result<(Matrix<f64>, Option<Vec<f64>>)> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let (rows, width) = read_rows(file, options)?;
    if width == dim {
        let options = CsvOptions {
            expected_dim: Some(dim),
            ..options.clone()
        };
        let (inputs, _) = assemble(&rows, width, usize::MAX, &options)?;
        return Ok((inputs, None));
    }
    if width != dim + 1 {
        return Err(Error::dim("csv columns (features, optionally plus response)", dim + 1, width));
    }
    let options = CsvOptions {
        expected_dim: Some(dim),
        ..options.clone()
    };
    let (inputs, responses) = assemble(&rows, width, options.response_column.unwrap_or(width - 1), &options)?;
    Ok((inputs, Some(responses)))
}

fn read_rows<R: Read>(reader: R, options: &CsvOptions) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let mut width: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Csv {
                line,
                message: format!("expected {w} columns, found {}", record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Csv {
                        line,
                        message: format!("column {c}: non-numeric value {cell:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let width = width.ok_or(Error::EmptyData("csv file has no data rows"))?;
    Ok((rows, width))
}

/// Split rows into features and the `response` column (none when out of range).
fn assemble(rows: &[Vec<f64>], width: usize, response: usize, options: &CsvOptions) -> Result<(Matrix<f64>, Vec<f64>)> {
    let has_response = response != usize::MAX;
    if has_response && response >= width {
        return Err(Error::InvalidArgument(format!(
            "response column {response} out of range for {width} columns"
        )));
    }
    let dim = if has_response { width - 1 } else { width };
    if let Some(expected) = options.expected_dim {
        if expected != dim {
            return Err(Error::dim("csv feature columns", expected, dim));
        }
    }
    let n = rows.len();
    let mut inputs = Vec::with_capacity(n * dim);
    let mut responses = Vec::with_capacity(n);
    for row in rows {
        for (c, &v) in row.iter().enumerate() {
            if c == response {
                responses.push(v);
            } else {
                inputs.push(v);
            }
        }
    }
    if options.binary_to_pm1 {
        map_binary_columns(&mut inputs, dim)?;
    }
    Ok((Matrix::from_vec(n, dim, inputs)?, responses))
}

fn map_binary_columns(inputs: &mut [f64], dim: usize) -> Result<()> {
    for c in 0..dim {
        let values: BTreeSet<i64> = inputs
            .iter()
            .skip(c)
            .step_by(dim)
            .map(|&v| if v.fract() == 0.0 && v.abs() <= 1.0 { v as i64 } else { i64::MAX })
            .collect();
        if values.contains(&i64::MAX) {
            continue;
        }
        let has_zero = values.contains(&0);
        if has_zero && values.contains(&-1) {
            return Err(Error::InvalidArgument(format!(
                "feature column {c} mixes 0/1 coding with -1 values; binary mapping is ambiguous"
            )));
        }
        if values.iter().all(|v| *v == 0 || *v == 1) {
            for v in inputs.iter_mut().skip(c).step_by(dim) {
                *v = if *v == 0.0 { -1.0 } else { 1.0 };
            }
        }
    }
    Ok(())
}

/// Render with a `x0..x{D-1},y` header; values use shortest round-trip
/// formatting, so reloading reproduces every bit.
pub fn dataset_to_csv(data: &Dataset<f64>) -> String {
    let mut out = String::new();
    for c in 0..data.dim() {
        let _ = write!(out, "x{c},");
    }
    out.push_str("y\n");
    for (x, y) in data.iter() {
        for v in x {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{y}");
    }
    out
}

pub fn save_csv(path: &Path, data: &Dataset<f64>) -> Result<()> {
    write_string(path, &dataset_to_csv(data))
}
