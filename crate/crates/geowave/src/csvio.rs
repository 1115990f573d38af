//! CSV artifacts: header row plus fixed 17-significant-digit decimal
//! formatting, so identical runs produce byte-identical files.

use crate::error::Result;
use std::io::Write;
use std::path::Path;

/// Format a float with 17 significant digits (round-trips f64 exactly).
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{:.16e}", v)
}

pub fn write_csv<P: AsRef<Path>>(path: P, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Key-value manifest, sorted by key for determinism.
pub fn write_manifest<P: AsRef<Path>>(path: P, entries: &[(String, String)]) -> Result<()> {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "key,value")?;
    for (k, v) in sorted {
        writeln!(out, "{k},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for &v in &[1.0, -0.1, 3.141592653589793, 1e-300, 2.0 / 3.0] {
            let s = fmt17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
    }
}
