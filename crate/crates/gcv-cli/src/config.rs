//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Consumers read keys through a [`Config`] and finish with
//! [`Config::finish`], which rejects any key that was never read, so typos
//! fail fast instead of silently running defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::{CliError, Result};

#[derive(Debug)]
pub struct Config {
    values: BTreeMap<String, String>,
    read: BTreeSet<String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(Self {
            values,
            read: BTreeSet::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Mandatory key.
    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        match self.take(key)? {
            Some(v) => Ok(v),
            None => Err(CliError::Config(format!("missing required key '{key}'"))),
        }
    }

    /// Optional key with a default.
    pub fn optional<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.read.insert(key.to_string());
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Config(format!("key '{key}': cannot parse value '{raw}'"))
            }),
        }
    }

    /// Optional string-valued key; `None` when absent.
    pub fn optional_string(&mut self, key: &str) -> Result<Option<String>> {
        self.take(key)
    }

    /// Comma-separated list of floats.
    pub fn optional_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take::<String>(key)? {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        CliError::Config(format!("key '{key}': cannot parse entry '{s}'"))
                    })
                })
                .collect(),
        }
    }

    /// Errors out if any configured key was never consumed.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !self.read.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            let list = unknown
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ");
            Err(CliError::Config(format!("unknown keys: {list}")))
        }
    }
}
