use std::sync::Arc;

use rayon::prelude::*;

use super::pattern::SparsityPattern;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::samplets::SampletBasis;

/// A matrix in samplet coordinates stored on a fixed sparsity pattern.
///
/// Bases are optional so that imported matrices can be handled; when both
/// operands of an operation carry bases they must be the same objects.
#[derive(Debug, Clone)]
pub struct SCompressedMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
    row_basis: Option<Arc<SampletBasis>>,
    col_basis: Option<Arc<SampletBasis>>,
}

fn same_basis(a: &Option<Arc<SampletBasis>>, b: &Option<Arc<SampletBasis>>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => Arc::ptr_eq(x, y),
        _ => true,
    }
}

impl SCompressedMatrix {
    pub fn new(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::mismatch(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                pattern.nnz()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at position {p}")));
        }
        Ok(Self {
            pattern,
            values,
            row_basis: None,
            col_basis: None,
        })
    }

    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let n = pattern.nnz();
        Self {
            pattern,
            values: vec![0.0; n],
            row_basis: None,
            col_basis: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            pattern: Arc::new(SparsityPattern::identity(n)),
            values: vec![1.0; n],
            row_basis: None,
            col_basis: None,
        }
    }

    /// Samples `dense` on `pattern`.
    pub fn from_dense(dense: &DenseMatrix, pattern: Arc<SparsityPattern>) -> Result<Self> {
        if dense.rows() != pattern.nrows() || dense.cols() != pattern.ncols() {
            return Err(Error::mismatch("dense matrix and pattern shapes differ"));
        }
        let mut values = vec![0.0; pattern.nnz()];
        for i in 0..pattern.nrows() {
            let row = dense.row(i);
            for p in pattern.row_range(i) {
                values[p] = row[pattern.col_idx()[p] as usize];
            }
        }
        Ok(Self {
            pattern,
            values,
            row_basis: None,
            col_basis: None,
        })
    }

    pub fn with_bases(mut self, rows: Option<Arc<SampletBasis>>, cols: Option<Arc<SampletBasis>>) -> Result<Self> {
        if rows.as_ref().is_some_and(|b| b.len() != self.nrows()) || cols.as_ref().is_some_and(|b| b.len() != self.ncols()) {
            return Err(Error::mismatch("basis size differs from matrix size"));
        }
        self.row_basis = rows;
        self.col_basis = cols;
        Ok(self)
    }

    /// Same basis on both sides.
    pub fn with_basis(self, basis: Arc<SampletBasis>) -> Result<Self> {
        self.with_bases(Some(basis.clone()), Some(basis))
    }

    pub fn row_basis(&self) -> Option<&Arc<SampletBasis>> {
        self.row_basis.as_ref()
    }

    pub fn col_basis(&self) -> Option<&Arc<SampletBasis>> {
        self.col_basis.as_ref()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Checks that `other` lives on the same row/column spaces.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.nrows() != other.nrows() || self.ncols() != other.ncols() {
            return Err(Error::mismatch(format!(
                "{}x{} vs {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        if !same_basis(&self.row_basis, &other.row_basis) || !same_basis(&self.col_basis, &other.col_basis) {
            return Err(Error::mismatch("operands belong to different samplet bases"));
        }
        Ok(())
    }

    /// Matching bases, preferring those of `self`.
    pub(crate) fn merged_bases(&self, other: &Self) -> (Option<Arc<SampletBasis>>, Option<Arc<SampletBasis>>) {
        (
            self.row_basis.clone().or_else(|| other.row_basis.clone()),
            self.col_basis.clone().or_else(|| other.col_basis.clone()),
        )
    }

    pub(crate) fn set_bases_unchecked(&mut self, rows: Option<Arc<SampletBasis>>, cols: Option<Arc<SampletBasis>>) {
        self.row_basis = rows;
        self.col_basis = cols;
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows(), self.ncols());
        for i in 0..self.nrows() {
            for p in self.pattern.row_range(i) {
                d.set(i, self.pattern.col_idx()[p] as usize, self.values[p]);
            }
        }
        d
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Adds `mu` to every diagonal entry; the pattern must contain the diagonal.
    pub fn shifted(&self, mu: f64) -> Result<Self> {
        if !self.pattern.has_full_diagonal() {
            return Err(Error::invalid("pattern lacks diagonal entries"));
        }
        let mut out = self.clone();
        if mu != 0.0 {
            for i in 0..self.nrows() {
                let p = self.pattern.find(i, i).unwrap();
                out.values[p] += mu;
            }
        }
        Ok(out)
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|`; zero for exactly symmetric values.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows() {
            for p in self.pattern.row_range(i) {
                let j = self.pattern.col_idx()[p] as usize;
                worst = worst.max((self.values[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn transpose(&self) -> Self {
        let (t, src) = self.pattern.transpose_with_map();
        Self {
            pattern: Arc::new(t),
            values: src.iter().map(|&p| self.values[p]).collect(),
            row_basis: self.col_basis.clone(),
            col_basis: self.row_basis.clone(),
        }
    }

    /// `A V` for an `ncols x k` multivector.
    pub fn apply(&self, v: &DenseMatrix) -> Result<DenseMatrix> {
        if v.rows() != self.ncols() {
            return Err(Error::mismatch(format!(
                "{}x{} matrix applied to {} rows",
                self.nrows(),
                self.ncols(),
                v.rows()
            )));
        }
        let k = v.cols();
        let mut out = DenseMatrix::zeros(self.nrows(), k);
        let pat = &self.pattern;
        out.as_mut_slice()
            .par_chunks_mut(k.max(1))
            .enumerate()
            .for_each(|(i, orow)| {
                for p in pat.row_range(i) {
                    let a = self.values[p];
                    let vrow = v.row(pat.col_idx()[p] as usize);
                    for (o, x) in orow.iter_mut().zip(vrow) {
                        *o += a * x;
                    }
                }
            });
        Ok(out)
    }

    pub fn apply_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(&DenseMatrix::column(v.to_vec()))?.into_vec())
    }

    /// Values moved onto `target`; entries outside it are dropped and new
    /// positions are zero.
    pub fn restrict_to(&self, target: Arc<SparsityPattern>) -> Result<Self> {
        if target.nrows() != self.nrows() || target.ncols() != self.ncols() {
            return Err(Error::mismatch("target pattern shape differs"));
        }
        let mut values = vec![0.0; target.nnz()];
        for i in 0..target.nrows() {
            let src = self.pattern.row(i);
            let src_base = self.pattern.row_ptr()[i];
            let mut k = 0;
            for p in target.row_range(i) {
                let j = target.col_idx()[p];
                while k < src.len() && src[k] < j {
                    k += 1;
                }
                if k < src.len() && src[k] == j {
                    values[p] = self.values[src_base + k];
                }
            }
        }
        Ok(Self {
            pattern: target,
            values,
            row_basis: self.row_basis.clone(),
            col_basis: self.col_basis.clone(),
        })
    }
}
