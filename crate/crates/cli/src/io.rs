//! CSV datasets and matrices, and JSON written with 17 significant digits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use decoco::faer::Mat;
use decoco::Dataset;
use serde::Serialize;

use crate::CliError;

/// Every float as `{:.16e}`, which round-trips exactly.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_real(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{}", fmt_real(value as f64))
    }
}

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser).map_err(|e| CliError::Input(format!("cannot serialise report: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| CliError::Input(e.to_string()))
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

fn parse_cell(cell: &str, line: u64, column: &str) -> Result<f64, CliError> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::Input(format!("line {line}, column {column}: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::Input(format!("line {line}, column {column}: value is not finite")));
    }
    Ok(v)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let at = e.position().map(|p| format!("line {}: ", p.line())).unwrap_or_default();
    CliError::Input(format!("{}: {at}{e}", path.display()))
}

/// `y,d,z1_1..z1_p[,z2_1..z2_p]` with a header row.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let p = header.iter().filter(|h| h.starts_with("z1_")).count();
    let width = header.len();
    let with_reps = width == 2 + 2 * p;
    let expected = dataset_header(p, with_reps);
    if p == 0 || !(width == 2 + p || with_reps) || header != expected {
        return Err(CliError::Input(format!(
            "{}: line 1: header must read y,d,z1_1..z1_p[,z2_1..z2_p], got {}",
            path.display(),
            header.join(",")
        )));
    }

    let (mut y, mut d, mut z1, mut z2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (j, cell) in record.iter().enumerate() {
            let v = parse_cell(cell, line, &header[j])?;
            match j {
                0 => y.push(v),
                1 => d.push(v),
                j if j < 2 + p => z1.push(v),
                _ => z2.push(v),
            }
        }
    }
    Dataset::new(y, d, z1, with_reps.then_some(z2), p)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn dataset_header(p: usize, with_reps: bool) -> Vec<String> {
    let mut h = vec!["y".to_string(), "d".to_string()];
    h.extend((1..=p).map(|j| format!("z1_{j}")));
    if with_reps {
        h.extend((1..=p).map(|j| format!("z2_{j}")));
    }
    h
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let p = data.p();
    let mut out = dataset_header(p, data.has_replicates()).join(",");
    out.push('\n');
    for s in data.samples() {
        let mut row = vec![fmt_real(s.y), fmt_real(s.d)];
        row.extend(s.z1.iter().map(|v| fmt_real(*v)));
        if let Some(z2) = s.z2 {
            row.extend(z2.iter().map(|v| fmt_real(*v)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Headerless numeric CSV; must be square.
pub fn read_matrix(path: &Path) -> Result<Mat<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(c, line, &(j + 1).to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Input(format!("{}: empty matrix", path.display())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(CliError::Input(format!(
            "{}: line {}: matrix is not square ({} rows, {} columns)",
            path.display(),
            i + 1,
            n,
            r.len()
        )));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn matrix_csv(m: &Mat<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_real(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
