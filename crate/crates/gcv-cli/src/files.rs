//! On-disk model and measurement formats.
//!
//! A model file describes a time-invariant model as CSV-of-matrices with
//! section markers:
//!
//! ```text
//! A
//! 0.7, 0
//! 0.1, 1
//! C
//! 0, 1
//! Q
//! 139.4761, 7.38125
//! 7.38125, 0.390625
//! gamma
//! 30
//! ```
//!
//! Sections A, C, Q and gamma are required; mu defaults to zero and P0 to
//! the identity. `#` starts a comment. Time-varying models (spline
//! schedules, FIR regressors) are built by the dedicated experiment
//! builders, not by this format.
//!
//! A data file holds one measurement per row, either `y` or `t, y`; with
//! two columns the first is a strictly increasing timestamp.

use std::collections::BTreeMap;
use std::path::Path;

use gcv_core::statespace::TimeInvariantModel;
use nalgebra::{DMatrix, DVector};

use crate::csvout::fmt_f64;
use crate::{CliError, Result};

const SECTIONS: [&str; 6] = ["A", "C", "Q", "P0", "mu", "gamma"];

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Data(format!("line {lineno}: bad number '{}'", s.trim())))
        })
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Data(format!("section {what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn vector_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DVector<f64>> {
    // accept either a single row or a single column
    if rows.len() == 1 {
        Ok(DVector::from_column_slice(&rows[0]))
    } else if rows.iter().all(|r| r.len() == 1) {
        Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[0])))
    } else {
        Err(CliError::Data(format!(
            "section {what}: expected a vector (one row or one column)"
        )))
    }
}

pub fn parse_model(text: &str) -> Result<TimeInvariantModel> {
    let mut sections: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(&marker) = SECTIONS.iter().find(|&&s| s == line) {
            if sections.insert(marker, Vec::new()).is_some() {
                return Err(CliError::Data(format!(
                    "line {}: duplicate section {marker}",
                    i + 1
                )));
            }
            current = Some(marker);
            continue;
        }
        let marker = current.ok_or_else(|| {
            CliError::Data(format!("line {}: content before any section marker", i + 1))
        })?;
        let row = parse_row(line, i + 1)?;
        sections.get_mut(marker).unwrap().push(row);
    }

    let take = |name: &str| -> Result<Vec<Vec<f64>>> {
        match sections.get(name) {
            Some(rows) if !rows.is_empty() => Ok(rows.clone()),
            Some(_) => Err(CliError::Data(format!("section {name} is empty"))),
            None => Err(CliError::Data(format!("missing required section {name}"))),
        }
    };

    let a = matrix_from_rows(&take("A")?, "A")?;
    let n = a.nrows();
    let c = vector_from_rows(&take("C")?, "C")?;
    let q = matrix_from_rows(&take("Q")?, "Q")?;
    let gamma_rows = take("gamma")?;
    if gamma_rows.len() != 1 || gamma_rows[0].len() != 1 {
        return Err(CliError::Data("section gamma must hold one number".into()));
    }
    let gamma = gamma_rows[0][0];
    let mu = match sections.get("mu") {
        Some(rows) if !rows.is_empty() => vector_from_rows(rows, "mu")?,
        _ => DVector::zeros(n),
    };
    let p0 = match sections.get("P0") {
        Some(rows) if !rows.is_empty() => matrix_from_rows(rows, "P0")?,
        _ => DMatrix::identity(n, n),
    };
    Ok(TimeInvariantModel::new(a, c, q, mu, p0, gamma)?)
}

pub fn read_model(path: &Path) -> Result<TimeInvariantModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text)
}

pub fn write_model(path: &Path, model: &TimeInvariantModel) -> Result<()> {
    use gcv_core::statespace::StateSpaceModel;
    let mut out = String::new();
    let emit_matrix = |out: &mut String, name: &str, m: &DMatrix<f64>| {
        out.push_str(name);
        out.push('\n');
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
            out.push_str(&row.join(", "));
            out.push('\n');
        }
    };
    emit_matrix(&mut out, "A", &model.transition(1));
    out.push_str("C\n");
    let c: Vec<String> = model.observation(1).iter().map(|&x| fmt_f64(x)).collect();
    out.push_str(&c.join(", "));
    out.push('\n');
    emit_matrix(&mut out, "Q", &model.process_cov(1));
    emit_matrix(&mut out, "P0", &model.prior_cov());
    out.push_str("mu\n");
    let mu: Vec<String> = model.prior_mean().iter().map(|&x| fmt_f64(x)).collect();
    out.push_str(&mu.join(", "));
    out.push('\n');
    out.push_str("gamma\n");
    out.push_str(&fmt_f64(model.noise_var()));
    out.push('\n');
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Measurement file: returns optional timestamps and the measurements.
pub fn parse_data(text: &str) -> Result<(Option<Vec<f64>>, Vec<f64>)> {
    let mut width = None;
    let mut times = Vec::new();
    let mut ys = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = parse_row(line, i + 1)?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::Data(format!(
                    "line {}: expected {w} columns, found {}",
                    i + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        match row.len() {
            1 => ys.push(row[0]),
            2 => {
                times.push(row[0]);
                ys.push(row[1]);
            }
            n => {
                return Err(CliError::Data(format!(
                    "line {}: expected 1 or 2 columns, found {n}",
                    i + 1
                )))
            }
        }
    }
    if ys.is_empty() {
        return Err(CliError::Data("no measurements in data file".into()));
    }
    Ok(((!times.is_empty()).then_some(times), ys))
}

pub fn read_data(path: &Path) -> Result<(Option<Vec<f64>>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_data(&text)
}
