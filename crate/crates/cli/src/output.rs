//! Output directory layout, CSV tables and digests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use prion_core::SizeGrid;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Round-trippable float text: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Self::Float(x) => fmt_f64(*x),
            Self::Int(i) => i.to_string(),
            Self::Text(s) => s.clone(),
            Self::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Self::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Self::Empty, Self::Float)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Self::Int(i as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Self::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Columns given as equal-length series.
    pub fn from_columns(name: &str, columns: &[(&str, &[f64])]) -> Self {
        let header: Vec<&str> = columns.iter().map(|(h, _)| *h).collect();
        let mut t = Self::new(name, &header);
        let n = columns.first().map_or(0, |(_, c)| c.len());
        for i in 0..n {
            t.push(columns.iter().map(|(_, c)| Cell::Float(c[i])).collect());
        }
        t
    }

    pub fn write(&self, dir: &Path) -> Result<String> {
        let file = format!("{}.csv", self.name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(file)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of everything that determines the results.
pub fn config_digest(cfg: &RunConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output = crate::config::OutputConfig {
        dir: String::new(),
        csv: true,
    };
    sha256_hex(&serde_json::to_vec(&canonical).expect("config serializes"))
}

pub fn grid_hash(grid: &SizeGrid) -> String {
    let bytes: Vec<u8> = grid.edges().iter().flat_map(|e| e.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

/// `<root>/<experiment>-<first 12 hex digits>`.
pub fn run_directory(root: &Path, cfg: &RunConfig, digest: &str) -> PathBuf {
    root.join(format!("{}-{}", cfg.experiment, &digest[..12]))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn tables_write_plain_csv() {
        let dir = tempfile::tempdir().unwrap();
        let t = Table::from_columns("series", &[("t", &[0.0, 0.5]), ("v", &[600.0, 599.5])]);
        let file = t.write(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,v");
        assert_eq!(lines[2], "5.0000000000000000e-1,5.9950000000000000e2");
    }
}
