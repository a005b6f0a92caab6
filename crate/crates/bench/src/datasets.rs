//! Conversion of datasets that ship in a non-numeric layout.

use crate::error::{BenchError, Result};

/// Converts the comma-separated abalone file (sex letter, seven
/// measurements, rings) into whitespace rows: sex one-hot as `M F I`, the
/// measurements, then rings as the target. Numeric input passes through.
pub fn abalone_rows(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !line.contains(',') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |message: String| BenchError::Dataset { line: i + 1, message };
        if fields.len() != 9 {
            return Err(bad(format!("expected 9 fields, found {}", fields.len())));
        }
        let sex = match fields[0] {
            "M" => "1 0 0",
            "F" => "0 1 0",
            "I" => "0 0 1",
            other => return Err(bad(format!("unknown sex code {other:?}"))),
        };
        out.push_str(sex);
        for f in &fields[1..] {
            f.parse::<f64>().map_err(|_| bad(format!("bad number {f:?}")))?;
            out.push(' ');
            out.push_str(f);
        }
        out.push('\n');
    }
    Ok(out)
}
