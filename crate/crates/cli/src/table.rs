//! CSV tables with a header row. Numbers are written in the shortest form
//! that parses back to the same `f64`.

use std::fs::File;
use std::path::Path;

use ndarray::{Array1, Array2};
use persreg::metric::FeatureMetric;
use persreg::model::{CovariateColumn, Covariates};

use crate::error::{io_context, CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    // Display for f64 is the shortest round-trip representation
    format!("{v}")
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = io_context(File::open(path), path)?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    let file = io_context(File::create(path), path)?;
    Ok(csv::Writer::from_writer(file))
}

/// Header and string cells of a CSV file.
pub fn read_raw(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

fn parse_f64(cell: &str, path: &Path, row: usize, col: usize) -> CliResult<f64> {
    cell.trim().parse::<f64>().map_err(|_| {
        CliError::input(format!(
            "{}: row {row}, column {col}: '{cell}' is not a number",
            path.display()
        ))
    })
}

pub fn read_matrix(path: &Path) -> CliResult<Array2<f64>> {
    let (header, rows) = read_raw(path)?;
    let cols = header.len();
    let mut out = Array2::zeros((rows.len(), cols));
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            out[[i, j]] = parse_f64(cell, path, i, j)?;
        }
    }
    Ok(out)
}

/// Single-column table.
pub fn read_vector(path: &Path) -> CliResult<Array1<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(CliError::input(format!(
            "{}: expected one column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(m.column(0).to_owned())
}

/// Reads covariates. With a schema, each column is parsed as its metric
/// requires; without one, columns where every cell is a finite number are
/// continuous and the rest categorical.
pub fn read_covariates(path: &Path, schema: Option<&[FeatureMetric]>) -> CliResult<Covariates> {
    let (header, rows) = read_raw(path)?;
    if let Some(s) = schema {
        if s.len() != header.len() {
            return Err(CliError::input(format!(
                "{}: schema describes {} columns, file has {}",
                path.display(),
                s.len(),
                header.len()
            )));
        }
    }
    let mut columns = Vec::with_capacity(header.len());
    for j in 0..header.len() {
        let cells: Vec<&str> = rows.iter().map(|r| r[j].as_str()).collect();
        let numeric = || -> CliResult<Vec<f64>> {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| parse_f64(c, path, i, j))
                .collect()
        };
        let column = match schema.map(|s| s[j]) {
            Some(FeatureMetric::AbsoluteDifference) => CovariateColumn::Continuous(numeric()?),
            Some(FeatureMetric::Discrete) => {
                CovariateColumn::Categorical(cells.iter().map(|c| c.to_string()).collect())
            }
            None => match numeric() {
                Ok(v) if v.iter().all(|x| x.is_finite()) => CovariateColumn::Continuous(v),
                _ => CovariateColumn::Categorical(cells.iter().map(|c| c.to_string()).collect()),
            },
        };
        columns.push(column);
    }
    if columns.is_empty() {
        return Err(CliError::input(format!("{}: no covariate columns", path.display())));
    }
    Ok(Covariates::new(columns)?)
}

pub fn write_matrix(path: &Path, prefix: &str, m: &Array2<f64>) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record((0..m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    io_context(w.flush(), path)
}

pub fn write_vector(path: &Path, name: &str, v: &Array1<f64>) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record([name])?;
    for &x in v {
        w.write_record([fmt_f64(x)])?;
    }
    io_context(w.flush(), path)
}

pub fn write_covariates(path: &Path, u: &Covariates) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record((0..u.n_cols()).map(|j| format!("u{j}")))?;
    for i in 0..u.n_rows() {
        w.write_record(u.columns().iter().map(|c| match c {
            CovariateColumn::Continuous(v) => fmt_f64(v[i]),
            CovariateColumn::Categorical(v) => v[i].clone(),
        }))?;
    }
    io_context(w.flush(), path)
}

/// Generic record writer for ad-hoc tables.
pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    io_context(w.flush(), path)
}
