//! CSV tables and `key = value` reports with locale-free round-trip numbers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Shortest representation that parses back to the same f64.
pub fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            columns: header.len(),
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn nums(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        self.row(&cells);
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_file(path, &self.text)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.put(key, num(value));
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_file(path, &self.text)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Output locations for one command: the main CSV, its report, and siblings.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub csv: PathBuf,
}

impl Outputs {
    pub fn new(explicit: Option<&Path>, out_dir: &Path, label: &str, command: &str) -> Self {
        let csv = match explicit {
            Some(p) => p.to_path_buf(),
            None => out_dir.join(format!("{label}_{command}.csv")),
        };
        Self { csv }
    }

    pub fn report(&self) -> PathBuf {
        self.csv.with_extension("report")
    }

    /// `<stem>_<suffix>.csv` next to the main CSV.
    pub fn sibling(&self, suffix: &str) -> PathBuf {
        let stem = self
            .csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.csv.with_file_name(format!("{stem}_{suffix}.csv"))
    }
}
