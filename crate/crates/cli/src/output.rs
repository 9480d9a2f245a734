//! Deterministic output writers. CSV files carry a fingerprint comment
//! line, a header row, and 17-significant-digit floats; JSON reports embed
//! the fingerprint and a schema version. Identical config and seed produce
//! byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvFile {
    buf: String,
}

impl CsvFile {
    pub fn new(fingerprint: &str, header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&format!("# schema_version={SCHEMA_VERSION}\n"));
        buf.push_str(&format!("# config_fingerprint={fingerprint}\n"));
        buf.push_str(&header.join(","));
        buf.push('\n');
        CsvFile { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write_to(&self, path: &Path) -> CliResult<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.buf.as_bytes())?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::CliError::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text.as_bytes())?;
    Ok(())
}
