//! CSV emission with full-precision floats.
//!
//! All emitted values are plain decimal text (no quoting needed), so the
//! writer is a straight join. Floats are printed with 17 significant digits,
//! enough to round-trip f64 exactly, which is what makes the byte-identical
//! determinism guarantees of the experiment outputs testable. A preamble of
//! '#'-prefixed comment lines records the generator name and seed.

use std::io::Write;
use std::path::Path;

use crate::{CliError, Result};

/// Round-tripping decimal rendering of an f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

#[derive(Debug, Clone)]
pub struct CsvTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Result<Self> {
        let headers: Vec<String> = headers.into_iter().map(Into::into).collect();
        if headers.is_empty() {
            return Err(CliError::Data("CSV table needs at least one column".into()));
        }
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                return Err(CliError::Data(format!("duplicate CSV header '{h}'")));
            }
        }
        Ok(Self {
            headers,
            rows: Vec::new(),
        })
    }

    pub fn push_row(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(CliError::Data(format!(
                "CSV row has {} fields, expected {}",
                row.len(),
                self.headers.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_to(&self, out: &mut impl Write, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", self.headers.join(","))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf, comments)
            .expect("writing to memory cannot fail");
        std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
    }
}
