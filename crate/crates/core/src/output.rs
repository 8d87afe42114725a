//! Deterministic text output: fixed 12-significant-digit numbers and simple
//! CSV/JSON writers used by every data file.

use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};

/// `x` with 12 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // normalise -0
        return format!("{:.11e}", 0.0);
    }
    format!("{x:.11e}")
}

/// Write a header row and numeric rows.
pub fn write_csv<W: Write>(mut w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Two-column CSV.
pub fn write_xy_csv<W: Write>(w: W, x_name: &str, y_name: &str, x: &[f64], y: &[f64]) -> Result<()> {
    write_csv(w, &[x_name, y_name], x.iter().zip(y).map(|(&a, &b)| vec![a, b]))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
