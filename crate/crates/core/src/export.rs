//! Output formats and the run manifest carried by every artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Dot,
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "dot" => Ok(Format::Dot),
            "json" | "json-adjacency" => Ok(Format::Json),
            "csv" | "csv-edges" => Ok(Format::Csv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Key/value description of the run that produced an artifact.
///
/// Keys are kept sorted so the rendering is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Manifest(BTreeMap<String, String>);

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.insert(key, value);
        self
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// One `<prefix> key: value` line per entry.
    pub fn comment_block(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{prefix} {k}: {v}");
        }
        out
    }
}

/// A CSV document: manifest comment block, header row, data rows.
pub fn csv_table(manifest: &Manifest, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = manifest.comment_block("#");
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Shortest round-trip float rendering, stable across runs.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}
