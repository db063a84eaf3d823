//! Deterministic file output: CSV with 17 significant digits (bit-faithful
//! round trip of doubles) and a JSON summary embedding the resolved
//! configuration, seed and version. Nothing time- or machine-dependent goes
//! into output files, so reruns are byte-identical for any worker count.

use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Formats a double with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvWriter {
    buf: String,
    cols: usize,
}

impl CsvWriter {
    pub fn new(header: &[&str]) -> Self {
        CsvWriter {
            buf: format!("{}\n", header.join(",")),
            cols: header.len(),
        }
    }

    /// Appends one row of pre-formatted cells.
    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.cols, "csv row width mismatch");
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<(), String> {
        write_file(path, self.buf.as_bytes())
    }
}

/// One verification entry of the JSON summary.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// A check that passes when `statistic` is at most `threshold`.
    pub fn at_most(name: &str, statistic: f64, threshold: f64) -> Check {
        Check {
            name: name.to_string(),
            statistic,
            threshold,
            pass: statistic <= threshold,
        }
    }

    /// A check that passes when `statistic` is at least `threshold`.
    pub fn at_least(name: &str, statistic: f64, threshold: f64) -> Check {
        Check {
            name: name.to_string(),
            statistic,
            threshold,
            pass: statistic >= threshold,
        }
    }

    /// A check that passes when `|statistic| < threshold`.
    pub fn abs_below(name: &str, statistic: f64, threshold: f64) -> Check {
        Check {
            name: name.to_string(),
            statistic,
            threshold,
            pass: statistic.abs() < threshold,
        }
    }
}

#[derive(Serialize)]
pub struct Summary<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config: &'a crate::config::RunConfig,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
}

impl<'a> Summary<'a> {
    pub fn new(command: &'a str, config: &'a crate::config::RunConfig, seed: u64) -> Self {
        Summary {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            results: serde_json::Value::Null,
            checks: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, String> {
        let path = out_dir.join(format!("{}_summary.json", self.command.replace('-', "_")));
        let text = serde_json::to_string_pretty(self).map_err(|e| e.to_string())?;
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
        }
    }
    let mut f =
        fs::File::create(path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    f.write_all(bytes)
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}
