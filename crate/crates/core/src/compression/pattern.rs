use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::samplets::SampletBasis;

/// A kept (inadmissible) pair of clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockPair {
    pub row_cluster: usize,
    pub col_cluster: usize,
    pub row_level: usize,
    pub col_level: usize,
}

/// CSR sparsity pattern with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    blocks: Vec<BlockPair>,
    symmetric: bool,
}

impl SparsityPattern {
    /// From sorted, duplicate-free column lists.
    pub fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<u32>>) -> Result<Self> {
        if rows.len() != nrows {
            return Err(Error::mismatch(format!("{} rows given for {nrows}", rows.len())));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(rows.iter().map(|r| r.len()).sum());
        for (i, r) in rows.iter().enumerate() {
            if r.windows(2).any(|w| w[0] >= w[1]) || r.last().is_some_and(|&c| c as usize >= ncols) {
                return Err(Error::invalid(format!("row {i} is not sorted or out of range")));
            }
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let mut p = Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            blocks: Vec::new(),
            symmetric: false,
        };
        p.symmetric = p.is_structurally_symmetric();
        Ok(p)
    }

    pub(crate) fn from_csr_unchecked(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        symmetric: bool,
    ) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            blocks: Vec::new(),
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            blocks: Vec::new(),
            symmetric: true,
        }
    }

    pub fn full(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: (0..=nrows).map(|i| i * ncols).collect(),
            col_idx: (0..nrows).flat_map(|_| 0..ncols as u32).collect(),
            blocks: Vec::new(),
            symmetric: nrows == ncols,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Position of `(i, j)` in the value array.
    #[inline]
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row(i);
        r.binary_search(&(j as u32)).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.find(i, j).is_some()
    }

    /// Cluster pairs that produced the pattern; empty for patterns that were
    /// not built from admissibility.
    pub fn blocks(&self) -> &[BlockPair] {
        &self.blocks
    }

    /// Symmetric flag: set when `(i,j)` present implies `(j,i)` present.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn has_full_diagonal(&self) -> bool {
        self.nrows == self.ncols && (0..self.nrows).all(|i| self.contains(i, i))
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        (0..self.nrows).all(|i| self.row(i).iter().all(|&j| self.contains(j as usize, i)))
    }

    /// Every entry of `self` is in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && (0..self.nrows).all(|i| {
                let (a, b) = (self.row(i), other.row(i));
                let mut k = 0;
                a.iter().all(|c| {
                    while k < b.len() && b[k] < *c {
                        k += 1;
                    }
                    k < b.len() && b[k] == *c
                })
            })
    }

    /// Transposed pattern and, for every entry of it, the position of the
    /// matching entry in `self`.
    pub fn transpose_with_map(&self) -> (Self, Vec<usize>) {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut src = vec![0usize; self.nnz()];
        for i in 0..self.nrows {
            for p in self.row_range(i) {
                let j = self.col_idx[p] as usize;
                let q = next[j];
                col_idx[q] = i as u32;
                src[q] = p;
                next[j] += 1;
            }
        }
        let t = Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            blocks: Vec::new(),
            symmetric: self.symmetric,
        };
        (t, src)
    }

    /// Union of two patterns of equal shape.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::mismatch("pattern shapes differ"));
        }
        let rows: Vec<Vec<u32>> = (0..self.nrows)
            .into_par_iter()
            .map(|i| {
                let (a, b) = (self.row(i), other.row(i));
                let mut out = Vec::with_capacity(a.len().max(b.len()));
                let (mut x, mut y) = (0, 0);
                while x < a.len() || y < b.len() {
                    let next = match (a.get(x), b.get(y)) {
                        (Some(&u), Some(&v)) if u == v => {
                            x += 1;
                            y += 1;
                            u
                        }
                        (Some(&u), Some(&v)) if u < v => {
                            x += 1;
                            u
                        }
                        (Some(_), Some(&v)) => {
                            y += 1;
                            v
                        }
                        (Some(&u), None) => {
                            x += 1;
                            u
                        }
                        (None, Some(&v)) => {
                            y += 1;
                            v
                        }
                        (None, None) => unreachable!(),
                    };
                    out.push(next);
                }
                out
            })
            .collect();
        Self::from_rows(self.nrows, self.ncols, rows)
    }

    /// Number of kept blocks per `(row level, column level)`.
    pub fn level_block_counts(&self) -> Vec<Vec<usize>> {
        let lr = self.blocks.iter().map(|b| b.row_level + 1).max().unwrap_or(0);
        let lc = self.blocks.iter().map(|b| b.col_level + 1).max().unwrap_or(0);
        let mut out = vec![vec![0; lc]; lr];
        for b in &self.blocks {
            out[b.row_level][b.col_level] += 1;
        }
        out
    }

    /// Rows restricted to a column subset; `keep(i, j)` decides each entry.
    pub(crate) fn filter(&self, keep: impl Fn(usize, usize) -> bool + Sync) -> (Self, Vec<usize>) {
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut src = Vec::new();
        for i in 0..self.nrows {
            for p in self.row_range(i) {
                let j = self.col_idx[p] as usize;
                if keep(i, j) {
                    col_idx.push(j as u32);
                    src.push(p);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let mut out = Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            blocks: self.blocks.clone(),
            symmetric: false,
        };
        out.symmetric = self.symmetric && out.is_structurally_symmetric();
        (out, src)
    }
}

/// `dist(a, b) >= eta * max(diam a, diam b)` on bounding boxes.
pub fn admissible(rows: &SampletBasis, a: usize, cols: &SampletBasis, b: usize, eta: f64) -> bool {
    let (na, nb) = (rows.tree().node(a), cols.tree().node(b));
    let d = na.bbox.distance(&nb.bbox);
    d >= eta * na.bbox.diameter().max(nb.bbox.diameter())
}

/// Symmetric a-priori pattern of a basis against itself.
pub fn build_pattern(basis: &SampletBasis, eta: f64) -> Result<SparsityPattern> {
    let mut p = build_cross_pattern(basis, basis, eta)?;
    p.symmetric = true;
    Ok(p)
}

/// Pattern of a matrix whose rows live in `rows` and columns in `cols`.
///
/// Every row cluster walks the column tree from the root and keeps each
/// cluster that fails admissibility; admissible clusters are pruned with
/// their subtrees. Pairs involving either root are always kept.
pub fn build_cross_pattern(rows: &SampletBasis, cols: &SampletBasis, eta: f64) -> Result<SparsityPattern> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    if rows.tree().dim() != cols.tree().dim() {
        return Err(Error::mismatch("bases live in different dimensions"));
    }
    let rt = rows.tree();
    let ct = cols.tree();
    let kept: Vec<Vec<usize>> = (0..rt.len())
        .into_par_iter()
        .map(|a| {
            let mut out = Vec::new();
            let mut stack = vec![0usize];
            while let Some(b) = stack.pop() {
                if a != 0 && b != 0 && admissible(rows, a, cols, b, eta) {
                    continue;
                }
                out.push(b);
                if let Some([l, r]) = ct.node(b).children {
                    stack.push(r);
                    stack.push(l);
                }
            }
            // Pre-order ids follow the global column order.
            out.sort_unstable_by_key(|&b| cols.coef_range(b).start);
            out
        })
        .collect();

    let nrows = rows.len();
    let ncols = cols.len();
    let mut row_cols: Vec<Vec<u32>> = vec![Vec::new(); nrows];
    let mut blocks = Vec::new();
    for (a, list) in kept.iter().enumerate() {
        let mut cols_a: Vec<u32> = Vec::new();
        for &b in list {
            let r = cols.coef_range(b);
            cols_a.extend(r.clone().map(|j| j as u32));
            blocks.push(BlockPair {
                row_cluster: a,
                col_cluster: b,
                row_level: rt.node(a).level,
                col_level: ct.node(b).level,
            });
        }
        let range = rows.coef_range(a);
        for i in range {
            row_cols[i] = cols_a.clone();
        }
    }
    let mut p = SparsityPattern::from_rows(nrows, ncols, row_cols)?;
    p.blocks = blocks;
    Ok(p)
}
