//! CSV artifacts with SHA-256 digests, and the run report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One CSV cell. Floats use the shortest representation that round-trips.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::I(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::I(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => format!("{x:?}"),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub schema_version: i64,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
    pub metrics: BTreeMap<String, Value>,
}

impl RunReport {
    pub fn digest(&self, file: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.file == file).map(|o| o.sha256.as_str())
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(Value::as_f64)
    }
}

/// Collects the files written by one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(format!("creating {}", root.display()), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[String], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let out_err = |e: csv::Error| CliError::Output {
            path: name.to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(out_err)?;
        let mut n = 0;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(row.iter().map(Cell::render)).map_err(out_err)?;
            n += 1;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        let path = self.root.join(name);
        fs::write(&path, &bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            rows: n,
        });
        Ok(())
    }

    pub fn into_files(self) -> Vec<OutputFile> {
        self.files
    }
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

pub fn write_report(root: &Path, report: &RunReport) -> Result<PathBuf, CliError> {
    let path = root.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}
