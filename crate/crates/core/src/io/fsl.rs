//! FSL-style `bvals` / `bvecs` text files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{NlsamError, Result};
use crate::volume::{GradientTable, DEFAULT_B0_THRESHOLD};

fn parse_rows(text: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| NlsamError::Gradients(format!("{what}: cannot parse {tok:?}")))
                })
                .collect()
        })
        .collect()
}

/// Parses bvals (one row, or one value per line) and bvecs (three rows of V
/// values; a V×3 layout is also accepted).
pub fn parse_gradients(bvals: &str, bvecs: &str, b0_threshold: f64) -> Result<GradientTable> {
    let bval_rows = parse_rows(bvals, "bvals")?;
    let values: Vec<f64> = if bval_rows.len() == 1 || bval_rows.iter().all(|r| r.len() == 1) {
        bval_rows.into_iter().flatten().collect()
    } else {
        return Err(NlsamError::Gradients(format!("bvals must be a single row, found {} rows", bval_rows.len())));
    };

    let rows = parse_rows(bvecs, "bvecs")?;
    let dirs: Vec<[f64; 3]> = if rows.len() == 3 && rows[0].len() == rows[1].len() && rows[1].len() == rows[2].len() {
        (0..rows[0].len()).map(|i| [rows[0][i], rows[1][i], rows[2][i]]).collect()
    } else if !rows.is_empty() && rows.iter().all(|r| r.len() == 3) {
        rows.iter().map(|r| [r[0], r[1], r[2]]).collect()
    } else {
        return Err(NlsamError::Gradients(format!(
            "bvecs must be three rows of equal length, found row lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    };

    if dirs.len() != values.len() {
        return Err(NlsamError::Gradients(format!("{} b-values but {} gradient directions", values.len(), dirs.len())));
    }
    GradientTable::new(values, dirs, b0_threshold)
}

pub fn read_gradients(bval_path: impl AsRef<Path>, bvec_path: impl AsRef<Path>) -> Result<GradientTable> {
    let (bp, vp) = (bval_path.as_ref(), bvec_path.as_ref());
    let bvals = fs::read_to_string(bp).map_err(|e| NlsamError::io(bp, e))?;
    let bvecs = fs::read_to_string(vp).map_err(|e| NlsamError::io(vp, e))?;
    parse_gradients(&bvals, &bvecs, DEFAULT_B0_THRESHOLD)
}

pub fn write_gradients(table: &GradientTable, bval_path: impl AsRef<Path>, bvec_path: impl AsRef<Path>) -> Result<()> {
    let join = |it: &mut dyn Iterator<Item = f64>| {
        let mut s = String::new();
        for (i, v) in it.enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
        s
    };
    let bvals = join(&mut table.bvals().iter().copied());
    let mut bvecs = String::new();
    for c in 0..3 {
        bvecs.push_str(&join(&mut table.bvecs().iter().map(|g| g[c])));
    }
    let (bp, vp) = (bval_path.as_ref(), bvec_path.as_ref());
    fs::write(bp, bvals).map_err(|e| NlsamError::io(bp, e))?;
    fs::write(vp, bvecs).map_err(|e| NlsamError::io(vp, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let t = parse_gradients("0 1000 1000\n", "0 1 0\n0 0 1\n0 0 0\n", 50.0).unwrap();
        assert_eq!(t.b0_indices(), vec![0]);
        assert_eq!(t.dwi_indices().len(), 2);
        assert_eq!(t.bvecs()[1], [1.0, 0.0, 0.0]);
        assert_eq!(t.bvecs()[2], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn normalizes_directions() {
        let t = parse_gradients("0 1000", "0 2\n0 0\n0 0", 50.0).unwrap();
        assert_eq!(t.bvecs()[1], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let err = parse_gradients("0 1000 1000", "0 1 0 1\n0 0 1 0\n0 0 0 0", 50.0);
        assert!(matches!(err, Err(NlsamError::Gradients(_))));
    }
}
