//! Report files: JSON summaries, CSV tables, two-column plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

pub const OUT_ENV: &str = "MMBLOW_OUT";
pub const DEFAULT_ROOT: &str = "mmblow-out";

/// Output root: `$MMBLOW_OUT` if set, else `mmblow-out`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

/// Collects the files written into one directory.
#[derive(Debug, Clone)]
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    pub fn sub(&self, name: &str) -> Result<OutDir> {
        OutDir::create(self.dir.join(name))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let body = serde_json::to_string_pretty(value)?;
        self.text(name, &body)
    }

    /// CSV with a header line; every row must have as many fields.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            let fields: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        self.text(name, &s)
    }

    /// Whitespace-separated `x y` columns with a `#` header.
    pub fn plot(&mut self, name: &str, labels: (&str, &str), pts: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
        let mut s = format!("# {} {}\n", labels.0, labels.1);
        for (x, y) in pts {
            let _ = writeln!(s, "{x:.12e} {y:.12e}");
        }
        self.text(name, &s)
    }
}
