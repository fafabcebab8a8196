use std::sync::Arc;

use super::ldlt::{LdltFactor, SymbolicFactor};
use super::ordering::{cluster_dissection, minimum_degree};
use crate::algebra::{formatted_add, formatted_multiply};
use crate::compression::{SCompressedMatrix, SparsityPattern};
use crate::error::{Error, Result};

/// Blocks at or below this size are inverted directly.
const MIN_BLOCK: usize = 64;

struct Context {
    perm: Option<Vec<usize>>,
    splits: Vec<usize>,
}

/// `(A + mu I)^{-1}` on the pattern of `A` by recursive 2x2 block
/// elimination with formatted products, `depth` levels deep. Blocks split at
/// the subtree boundary closest to the middle; leaves use the selected
/// inversion.
pub fn block_inverse(a: &SCompressedMatrix, mu: f64, depth: usize) -> Result<SCompressedMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::mismatch("block inversion needs a square matrix"));
    }
    let shifted = a.shifted(mu)?;
    let ctx = match a.row_basis() {
        Some(b) if b.len() == a.nrows() => {
            let tree = b.tree();
            let mut splits: Vec<usize> = (1..tree.len()).map(|c| b.coef_range(c).start).collect();
            splits.sort_unstable();
            Context {
                perm: Some(cluster_dissection(b)),
                splits,
            }
        }
        _ => Context {
            perm: None,
            splits: Vec::new(),
        },
    };
    let mut z = invert(&shifted, 0, depth, &ctx)?;
    z.set_bases_unchecked(a.row_basis().cloned(), a.col_basis().cloned());
    Ok(z)
}

fn invert(a: &SCompressedMatrix, lo: usize, depth: usize, ctx: &Context) -> Result<SCompressedMatrix> {
    let n = a.nrows();
    if depth == 0 || n <= MIN_BLOCK {
        let perm = match &ctx.perm {
            Some(p) => p.iter().filter(|&&i| i >= lo && i < lo + n).map(|&i| i - lo).collect(),
            None => minimum_degree(a.pattern()),
        };
        let sym = Arc::new(SymbolicFactor::analyze(a.pattern(), perm)?);
        let f = LdltFactor::factorize(&sym, a, 0.0).map_err(|e| match e {
            Error::NotPositiveDefinite { column, pivot } => Error::NotPositiveDefinite {
                column: column + lo,
                pivot,
            },
            other => other,
        })?;
        return f.selected_inverse(a.pattern());
    }
    let mid = lo + n / 2;
    let lo_idx = ctx.splits.partition_point(|&s| s <= lo);
    let hi_idx = ctx.splits.partition_point(|&s| s < lo + n);
    let k = ctx.splits[lo_idx..hi_idx]
        .iter()
        .copied()
        .min_by_key(|&s| s.abs_diff(mid))
        .unwrap_or(mid)
        - lo;

    let a11 = submatrix(a, 0..k, 0..k);
    let a12 = submatrix(a, 0..k, k..n);
    let a21 = submatrix(a, k..n, 0..k);
    let a22 = submatrix(a, k..n, k..n);

    let z11_inner = invert(&a11, lo, depth - 1, ctx)?;
    let mut c = formatted_multiply(&z11_inner, &a12, a12.pattern())?;
    c.scale(-1.0);
    let s = formatted_add(&a22, &formatted_multiply(&a21, &c, a22.pattern())?, a22.pattern())?;
    let s = symmetrized(&s);
    let z22 = invert(&s, lo + k, depth - 1, ctx)?;
    let z12 = formatted_multiply(&c, &z22, a12.pattern())?;
    let z11 = formatted_add(&z11_inner, &formatted_multiply(&z12, &c.transpose(), a11.pattern())?, a11.pattern())?;
    let z11 = symmetrized(&z11);

    // Reassemble: every row of A lists its left-block columns first.
    let z21 = z12.transpose();
    let mut values = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let (left, right) = if i < k { (&z11, &z12) } else { (&z21, &z22) };
        let r = if i < k { i } else { i - k };
        values.extend_from_slice(&left.values()[left.pattern().row_range(r)]);
        values.extend_from_slice(&right.values()[right.pattern().row_range(r)]);
    }
    SCompressedMatrix::new(a.pattern().clone(), values)
}

fn symmetrized(a: &SCompressedMatrix) -> SCompressedMatrix {
    let t = a.transpose();
    let mut out = a.clone();
    for (v, w) in out.values_mut().iter_mut().zip(t.values()) {
        *v = 0.5 * (*v + w);
    }
    out
}

/// Rows `rows` and columns `cols` of `a`, without bases.
fn submatrix(a: &SCompressedMatrix, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> SCompressedMatrix {
    let pat = a.pattern();
    let mut row_ptr = Vec::with_capacity(rows.len() + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for i in rows.clone() {
        let r = pat.row(i);
        let from = r.partition_point(|&j| (j as usize) < cols.start);
        let to = r.partition_point(|&j| (j as usize) < cols.end);
        let base = pat.row_ptr()[i];
        col_idx.extend(r[from..to].iter().map(|&j| j - cols.start as u32));
        values.extend_from_slice(&a.values()[base + from..base + to]);
        row_ptr.push(col_idx.len());
    }
    let symmetric = rows == cols && pat.is_symmetric();
    let p = SparsityPattern::from_csr_unchecked(rows.len(), cols.len(), row_ptr, col_idx, symmetric);
    SCompressedMatrix::new(Arc::new(p), values).expect("finite values stay finite")
}
