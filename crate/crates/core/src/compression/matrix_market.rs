//! MatrixMarket coordinate I/O for compressed matrices.

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use super::{SCompressedMatrix, SparsityPattern};
use crate::error::{Error, Result};

/// Writes `a` in coordinate format. Exactly symmetric matrices are written
/// as `symmetric` (lower triangle), everything else as `general`. Values
/// carry 17 significant digits.
pub fn write_matrix_market<W: Write>(mut w: W, a: &SCompressedMatrix) -> Result<()> {
    let symmetric = a.pattern().is_symmetric() && a.nrows() == a.ncols() && a.asymmetry() == 0.0;
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    let pat = a.pattern();
    let count = if symmetric {
        (0..a.nrows())
            .map(|i| pat.row(i).iter().filter(|&&j| j as usize <= i).count())
            .sum()
    } else {
        a.nnz()
    };
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), count)?;
    for i in 0..a.nrows() {
        for p in pat.row_range(i) {
            let j = pat.col_idx()[p] as usize;
            if symmetric && j > i {
                continue;
            }
            writeln!(w, "{} {} {:.16e}", i + 1, j + 1, a.values()[p])?;
        }
    }
    Ok(())
}

fn parse_err(row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        message: message.into(),
    }
}

/// Reads a real coordinate MatrixMarket file (general or symmetric).
pub fn read_matrix_market<R: Read>(source: R) -> Result<SCompressedMatrix> {
    let mut lines = BufReader::new(source).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?.to_ascii_lowercase();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(parse_err(1, "expected a MatrixMarket coordinate header"));
    }
    if fields[3] != "real" && fields[3] != "double" && fields[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field {}", fields[3])));
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let row = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(parse_err(row, "expected `rows cols entries`"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| parse_err(row, format!("bad integer {s:?}")));
                size = Some((p(toks[0])?, p(toks[1])?, p(toks[2])?));
            }
            Some((m, n, _)) => {
                if toks.len() != 3 {
                    return Err(parse_err(row, "expected `i j value`"));
                }
                let i: usize = toks[0].parse().map_err(|_| parse_err(row, "bad row index"))?;
                let j: usize = toks[1].parse().map_err(|_| parse_err(row, "bad column index"))?;
                let v: f64 = toks[2].parse().map_err(|_| parse_err(row, "bad value"))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(parse_err(row, format!("index ({i}, {j}) out of range")));
                }
                if symmetric && j > i {
                    return Err(parse_err(row, "symmetric files store the lower triangle only"));
                }
                entries.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    entries.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (m, n, declared) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    let stored = if symmetric {
        entries.iter().filter(|e| e.0 >= e.1).count()
    } else {
        entries.len()
    };
    if stored != declared {
        return Err(parse_err(0, format!("declared {declared} entries, found {stored}")));
    }
    entries.sort_by_key(|e| (e.0, e.1));
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
        return Err(parse_err(0, format!("duplicate entry ({}, {})", w[0].0 + 1, w[0].1 + 1)));
    }
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut values = Vec::with_capacity(entries.len());
    for (i, j, v) in entries {
        rows[i].push(j as u32);
        values.push(v);
    }
    let pattern = SparsityPattern::from_rows(m, n, rows)?;
    SCompressedMatrix::new(Arc::new(pattern), values)
}
