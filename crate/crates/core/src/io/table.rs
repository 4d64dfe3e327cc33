//! Whitespace-separated numeric tables (FSL-style bval/bvec files).

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::phantom::{Gradient, GradientTable};

/// One row per non-empty line; `#` starts a comment.
pub fn parse_numeric_table(text: &str) -> Result<Vec<Vec<f64>>, FormatError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i, line.split('#').next().unwrap_or("").trim()))
        .filter(|(_, line)| !line.is_empty())
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| FormatError::Table(format!("line {}: bad number {tok:?}", i + 1)))
                })
                .collect()
        })
        .collect()
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_numeric_table(&text).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a bval file (one row of b-values) and a bvec file (three rows of
/// direction components). Directions of weighted entries are normalized.
pub fn read_gradient_table(bval: impl AsRef<Path>, bvec: impl AsRef<Path>) -> Result<GradientTable> {
    let bvals: Vec<f64> = read_table(bval.as_ref())?.into_iter().flatten().collect();
    let rows = read_table(bvec.as_ref())?;
    let bad = |msg: String| Error::Format {
        path: bvec.as_ref().to_path_buf(),
        source: FormatError::Table(msg),
    };
    if rows.len() != 3 || rows.iter().any(|r| r.len() != bvals.len()) {
        return Err(bad(format!("expected 3 rows of {} values", bvals.len())));
    }
    let entries = bvals
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let g = [rows[0][i], rows[1][i], rows[2][i]];
            let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            let direction = if b > 0.0 && n > 0.0 { g.map(|v| v / n) } else { g };
            Gradient { b, direction }
        })
        .collect();
    GradientTable::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_and_comments() {
        let t = parse_numeric_table("0 1000  2000\n# note\n\n1 2 3 # tail\n").unwrap();
        assert_eq!(t, vec![vec![0.0, 1000.0, 2000.0], vec![1.0, 2.0, 3.0]]);
        assert!(parse_numeric_table("1 x").is_err());
        assert!(parse_numeric_table("1 nan").is_err());
    }
}
