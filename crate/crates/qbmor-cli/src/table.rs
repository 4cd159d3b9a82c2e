//! CSV time series and singular-value tables, one header row then numeric rows.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use qbmor::simulate::{Channel, InputSignal, SampledSignal, SimStats};
use qbmor::Trajectory;

use crate::error::{CliError, PathContext, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).at(path)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).at(path)?;
    for row in rows {
        w.write_record(row.into_iter().map(num)).at(path)?;
    }
    w.flush().at(path)
}

/// Reads a numeric table, returning the header and the columns.
fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).at(path)?;
    let header: Vec<String> = r.headers().at(path)?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (line, record) in r.records().enumerate() {
        let record = record.at(path)?;
        for (col, field) in cols.iter_mut().zip(record.iter()) {
            let v = field.trim().parse::<f64>().map_err(|_| {
                CliError::inconsistent(path, format!("row {}: '{field}' is not a number", line + 2))
            })?;
            col.push(v);
        }
    }
    Ok((header, cols))
}

/// Header `t,y1,...,yp`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let p = traj.y.nrows();
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=p).map(|i| format!("y{i}"))).collect();
    let rows = traj
        .t
        .iter()
        .enumerate()
        .map(|(k, t)| std::iter::once(*t).chain(traj.y.column(k).iter().copied()).collect());
    write_rows(path, &header, rows)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let (header, cols) = read_columns(path)?;
    if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
        return Err(CliError::inconsistent(path, "expected a header 't,y1,...'"));
    }
    let t = cols[0].clone();
    if t.is_empty() {
        return Err(CliError::inconsistent(path, "trajectory has no samples"));
    }
    let y = DMatrix::from_fn(cols.len() - 1, t.len(), |i, k| cols[i + 1][k]);
    Ok(Trajectory { t, y, x: None, stats: SimStats { steps: cols[0].len() - 1, max_manifold_defect: None } })
}

/// Header `index,sigma,normalized`, index 1-based.
pub fn write_hsv(path: &Path, sigma: &DVector<f64>, normalized: &DVector<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["index", "sigma", "normalized"]).at(path)?;
    for (i, (s, n)) in sigma.iter().zip(normalized.iter()).enumerate() {
        w.write_record([(i + 1).to_string(), num(*s), num(*n)]).at(path)?;
    }
    w.flush().at(path)
}

/// Header `t,rel_err`.
pub fn write_errors(path: &Path, t: &[f64], rel_err: &[f64]) -> Result<()> {
    let header = ["t", "rel_err"].map(String::from);
    write_rows(path, &header, t.iter().zip(rel_err).map(|(t, e)| vec![*t, *e]))
}

/// Input table `t,u1,...,um` as piecewise-linear channels.
pub fn read_signal(path: &Path) -> Result<InputSignal> {
    let (header, cols) = read_columns(path)?;
    if header.first().map(String::as_str) != Some("t") {
        return Err(CliError::inconsistent(path, "expected a header 't,u1,...'"));
    }
    let channels = cols[1..]
        .iter()
        .map(|values| SampledSignal::new(cols[0].clone(), values.clone()).map(Channel::Sampled))
        .collect::<qbmor::Result<Vec<_>>>()
        .map_err(|e| CliError::inconsistent(path, e.to_string()))?;
    Ok(InputSignal { channels })
}
