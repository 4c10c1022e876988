//! Deterministic artifact writing: CSV with a fixed float format and LF line
//! endings, JSON with sorted keys. Re-running a command with the same config
//! and seed must reproduce every output byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// Fixed 17-significant-digit scientific format, enough to round-trip f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// One CSV table: header row, comma separator, LF endings, every float
/// through [`fmt_f64`].
pub struct Csv {
    buf: String,
    cols: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Csv { buf, cols: header.len() }
    }

    pub fn row(&mut self, cells: &[f64]) {
        assert_eq!(cells.len(), self.cols, "row width must match header");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{}", fmt_f64(*c));
        }
        self.buf.push('\n');
    }

    /// Row with a leading label cell followed by numeric cells.
    pub fn labeled_row(&mut self, label: &str, cells: &[f64]) {
        assert_eq!(cells.len() + 1, self.cols, "row width must match header");
        self.buf.push_str(label);
        for c in cells {
            self.buf.push(',');
            let _ = write!(self.buf, "{}", fmt_f64(*c));
        }
        self.buf.push('\n');
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), self.buf.as_bytes())?;
        Ok(())
    }
}

/// Pretty JSON (serde_json keeps map keys sorted) with a trailing newline.
pub fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text.as_bytes())?;
    Ok(())
}
