//! Output staging: every command renders its files into an in-memory bundle
//! first; a single writer then puts them on disk and records checksums.
//! Floats are emitted with 17 significant digits so that re-parsing is
//! lossless and diffs are meaningful.

use std::collections::BTreeMap;

use antilimit::error::{Error, Result};
use serde::Serialize;

/// 17-significant-digit float rendering.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Default)]
pub struct OutputBundle {
    /// Relative file name → content bytes, ordered by name.
    pub files: BTreeMap<String, Vec<u8>>,
    pub warnings: Vec<String>,
}

impl OutputBundle {
    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(format!("serialization of {name} failed: {e}")))?;
        text.push('\n');
        self.files.insert(name.to_string(), text.into_bytes());
        Ok(())
    }

    pub fn add_csv(&mut self, name: &str, header: &str, rows: Vec<String>) {
        let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
        text.push_str(header);
        text.push('\n');
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        self.files.insert(name.to_string(), text.into_bytes());
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

/// Sanitize a free-text field for a CSV cell.
pub fn csv_text(s: &str) -> String {
    s.replace(['\n', '\r'], " ").replace(',', ";")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_render_17_digits() {
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        let x = 0.1 + 0.2;
        let parsed: f64 = fmt_float(x).parse().unwrap();
        assert_eq!(parsed.to_bits(), x.to_bits());
    }

    #[test]
    fn csv_text_strips_separators() {
        assert_eq!(csv_text("a,b\nc"), "a;b c");
    }
}
