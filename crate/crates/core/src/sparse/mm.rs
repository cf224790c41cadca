//! Matrix-market style text dumps of symmetric sparse matrices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::symmetric::SparseSymmetric;

/// Writes the lower triangle as 1-based `row col value` triplets.
pub fn write_matrix_market<W: Write>(a: &SparseSymmetric<f64>, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.dim(), a.dim(), a.nnz())?;
    for (i, j, v) in a.iter() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_matrix_market<R: BufRead>(r: R) -> Result<SparseSymmetric<f64>> {
    let mut lines = r.lines();
    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines.by_ref() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(Error::Parse(format!("bad size line: {t}")));
                }
                let n: usize = f[0].parse().map_err(|_| Error::Parse(t.into()))?;
                let nnz: usize = f[2].parse().map_err(|_| Error::Parse(t.into()))?;
                size = Some((n, nnz));
            }
            Some(_) => {
                if f.len() != 3 {
                    return Err(Error::Parse(format!("bad entry line: {t}")));
                }
                let i: usize = f[0].parse().map_err(|_| Error::Parse(t.into()))?;
                let j: usize = f[1].parse().map_err(|_| Error::Parse(t.into()))?;
                let v: f64 = f[2].parse().map_err(|_| Error::Parse(t.into()))?;
                if i == 0 || j == 0 {
                    return Err(Error::Parse("indices are 1-based".into()));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    if triplets.len() != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {}", triplets.len())));
    }
    SparseSymmetric::from_triplets(n, &triplets)
}
