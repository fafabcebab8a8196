//! S-compression of kernel matrices: admissibility patterns, dense and
//! direct assembly in samplet coordinates, and a-posteriori thresholding.

mod matrix;
pub mod matrix_market;
mod pattern;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use matrix::SCompressedMatrix;
pub use pattern::{admissible, build_cross_pattern, build_pattern, BlockPair, SparsityPattern};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::samplets::SampletBasis;

/// Default relative threshold numerator: `tau = DEFAULT_TAU_TIMES_N / N`.
pub const DEFAULT_TAU_TIMES_N: f64 = 1e-5;
pub const DEFAULT_ETA: f64 = 1.25;
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdStats {
    pub kept: usize,
    pub dropped: usize,
    /// Every off-diagonal entry was removed.
    pub fully_thresholded: bool,
}

/// Drops entries with `|a| < tau`; diagonal entries of square matrices are
/// always kept. `tau = 0` keeps everything.
pub fn apply_threshold(a: &SCompressedMatrix, tau: f64) -> Result<(SCompressedMatrix, ThresholdStats)> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {tau}")));
    }
    let square = a.nrows() == a.ncols();
    let off_diag_before = (0..a.nrows())
        .map(|i| a.pattern().row(i).iter().filter(|&&j| !square || j as usize != i).count())
        .sum::<usize>();
    let vals = a.values();
    let pat = a.pattern();
    let (new_pat, src) = pat.filter(|i, j| {
        if square && i == j {
            return true;
        }
        let p = pat.find(i, j).unwrap();
        !(vals[p].abs() < tau)
    });
    let kept = new_pat.nnz();
    let dropped = pat.nnz() - kept;
    let off_diag_after = kept - if square { a.nrows().min(kept) } else { 0 };
    let fully = off_diag_before > 0 && off_diag_after == 0;
    if fully {
        log::warn!("threshold {tau:e} removed every off-diagonal entry");
    }
    let values = src.iter().map(|&p| vals[p]).collect();
    let mut out = SCompressedMatrix::new(Arc::new(new_pat), values)?;
    out.set_bases_unchecked(a.row_basis().cloned(), a.col_basis().cloned());
    Ok((
        out,
        ThresholdStats {
            kept,
            dropped,
            fully_thresholded: fully,
        },
    ))
}

/// Restricts an already transformed matrix `T K T^T` to `pattern` and
/// thresholds it.
pub fn compress_transformed(
    k_sigma: &DenseMatrix,
    pattern: &Arc<SparsityPattern>,
    tau: f64,
) -> Result<(SCompressedMatrix, ThresholdStats)> {
    let a = SCompressedMatrix::from_dense(k_sigma, pattern.clone())?;
    apply_threshold(&a, tau)
}

/// Dense reference path: `T K T^T` by fast transforms, restricted to
/// `pattern`, then thresholded. `k` is in the basis' internal point order.
pub fn compress_dense(
    basis: &Arc<SampletBasis>,
    k: &DenseMatrix,
    pattern: &Arc<SparsityPattern>,
    tau: f64,
) -> Result<SCompressedMatrix> {
    let ks = basis.transform_dense(k)?;
    let (a, _) = compress_transformed(&ks, pattern, tau)?;
    a.with_basis(basis.clone())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DirectStats {
    pub blocks_computed: usize,
    pub kernel_evaluations: u64,
}

fn coefficient_blocks(basis: &SampletBasis) -> Vec<DenseMatrix> {
    (0..basis.tree().len())
        .into_par_iter()
        .map(|c| basis.coefficient_block(c))
        .collect()
}

/// `C_a^T K(a, b) C_b` for the coefficient blocks of two clusters.
fn block_entries(
    spec: &KernelSpec,
    rows: &SampletBasis,
    ca: &DenseMatrix,
    a: usize,
    cols: &SampletBasis,
    cb: &DenseMatrix,
    b: usize,
) -> DenseMatrix {
    let ra = rows.tree().node(a).range.clone();
    let rb = cols.tree().node(b).range.clone();
    let (na, nb) = (ca.cols(), cb.cols());
    let mut w = DenseMatrix::zeros(ra.len(), nb);
    let mut krow = vec![0.0; rb.len()];
    for (ii, i) in ra.clone().enumerate() {
        let x = rows.points().point(i);
        for (jj, j) in rb.clone().enumerate() {
            krow[jj] = spec.eval_points(x, cols.points().point(j));
        }
        let wrow = w.row_mut(ii);
        for (jj, &kv) in krow.iter().enumerate() {
            for (wv, c) in wrow.iter_mut().zip(cb.row(jj)) {
                *wv += kv * c;
            }
        }
    }
    let mut out = DenseMatrix::zeros(na, nb);
    for ii in 0..ra.len() {
        let wrow = w.row(ii);
        for (s, &c) in ca.row(ii).iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, wv) in out.row_mut(s).iter_mut().zip(wrow) {
                *o += c * wv;
            }
        }
    }
    out
}

fn scatter_block(
    values: &mut [f64],
    pattern: &SparsityPattern,
    rows: std::ops::Range<usize>,
    col_start: usize,
    block: &DenseMatrix,
    transpose: bool,
) -> Result<()> {
    for (ii, i) in rows.enumerate() {
        let p0 = pattern
            .find(i, col_start)
            .ok_or_else(|| Error::invalid("pattern does not contain its own block"))?;
        let width = if transpose { block.rows() } else { block.cols() };
        for jj in 0..width {
            values[p0 + jj] = if transpose { block.get(jj, ii) } else { block.get(ii, jj) };
        }
    }
    Ok(())
}

/// Direct assembly from kernel evaluations between the points of each kept
/// cluster pair. Each unordered pair is computed once and mirrored.
pub fn assemble_compressed_direct(
    basis: &Arc<SampletBasis>,
    spec: &KernelSpec,
    pattern: &Arc<SparsityPattern>,
) -> Result<(SCompressedMatrix, DirectStats)> {
    if pattern.blocks().is_empty() || pattern.nrows() != basis.len() {
        return Err(Error::invalid("direct assembly needs an admissibility pattern of this basis"));
    }
    let coeffs = coefficient_blocks(basis);
    let work: Vec<BlockPair> = pattern
        .blocks()
        .iter()
        .copied()
        .filter(|b| b.row_cluster <= b.col_cluster)
        .collect();
    let blocks: Vec<DenseMatrix> = work
        .par_iter()
        .map(|bp| {
            let (a, b) = (bp.row_cluster, bp.col_cluster);
            block_entries(spec, basis, &coeffs[a], a, basis, &coeffs[b], b)
        })
        .collect();
    let mut values = vec![0.0; pattern.nnz()];
    let mut stats = DirectStats::default();
    for (bp, blk) in work.iter().zip(&blocks) {
        let (a, b) = (bp.row_cluster, bp.col_cluster);
        let (ra, rb) = (basis.coef_range(a), basis.coef_range(b));
        stats.blocks_computed += 1;
        stats.kernel_evaluations += (basis.tree().node(a).len() * basis.tree().node(b).len()) as u64;
        if a == b {
            // Exact symmetry on diagonal blocks: mirror the upper triangle.
            let n = blk.rows();
            let sym = DenseMatrix::from_fn(n, n, |i, j| if i <= j { blk.get(i, j) } else { blk.get(j, i) });
            scatter_block(&mut values, pattern, ra.clone(), ra.start, &sym, false)?;
        } else {
            scatter_block(&mut values, pattern, ra.clone(), rb.start, blk, false)?;
            scatter_block(&mut values, pattern, rb, ra.start, blk, true)?;
        }
    }
    let m = SCompressedMatrix::new(pattern.clone(), values)?.with_basis(basis.clone())?;
    Ok((m, stats))
}

/// Direct assembly of a rectangular matrix `T_rows K T_cols^T`.
pub fn assemble_cross_direct(
    rows: &Arc<SampletBasis>,
    cols: &Arc<SampletBasis>,
    spec: &KernelSpec,
    pattern: &Arc<SparsityPattern>,
) -> Result<(SCompressedMatrix, DirectStats)> {
    if pattern.blocks().is_empty() || pattern.nrows() != rows.len() || pattern.ncols() != cols.len() {
        return Err(Error::invalid("direct assembly needs an admissibility pattern of these bases"));
    }
    let (cr, cc) = (coefficient_blocks(rows), coefficient_blocks(cols));
    let blocks: Vec<DenseMatrix> = pattern
        .blocks()
        .par_iter()
        .map(|bp| block_entries(spec, rows, &cr[bp.row_cluster], bp.row_cluster, cols, &cc[bp.col_cluster], bp.col_cluster))
        .collect();
    let mut values = vec![0.0; pattern.nnz()];
    let mut stats = DirectStats::default();
    for (bp, blk) in pattern.blocks().iter().zip(&blocks) {
        let (a, b) = (bp.row_cluster, bp.col_cluster);
        stats.blocks_computed += 1;
        stats.kernel_evaluations += (rows.tree().node(a).len() * cols.tree().node(b).len()) as u64;
        scatter_block(&mut values, pattern, rows.coef_range(a), cols.coef_range(b).start, blk, false)?;
    }
    let m = SCompressedMatrix::new(pattern.clone(), values)?.with_bases(Some(rows.clone()), Some(cols.clone()))?;
    Ok((m, stats))
}

/// `||K_sigma - A||_F / ||K_sigma||_F` with `K_sigma` already transformed.
pub fn relative_error_transformed(k_sigma: &DenseMatrix, a: &SCompressedMatrix) -> Result<f64> {
    if k_sigma.rows() != a.nrows() || k_sigma.cols() != a.ncols() {
        return Err(Error::mismatch("dense and compressed shapes differ"));
    }
    let pat = a.pattern();
    let vals = a.values();
    let parts: Vec<(f64, f64)> = (0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let row = k_sigma.row(i);
            let cols = pat.row(i);
            let base = pat.row_ptr()[i];
            let (mut diff, mut norm) = (0.0, 0.0);
            let mut k = 0;
            for (j, &x) in row.iter().enumerate() {
                norm += x * x;
                let d = if k < cols.len() && cols[k] as usize == j {
                    k += 1;
                    x - vals[base + k - 1]
                } else {
                    x
                };
                diff += d * d;
            }
            (diff, norm)
        })
        .collect();
    let (diff, norm) = parts.iter().fold((0.0, 0.0), |(d, n), (a, b)| (d + a, n + b));
    if norm == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((diff / norm).sqrt())
}

/// Relative Frobenius discrepancy between `T K T^T` and `a`.
pub fn compression_error(basis: &SampletBasis, k: &DenseMatrix, a: &SCompressedMatrix) -> Result<f64> {
    if k.rows() > crate::kernels::DEFAULT_DENSE_CAP {
        return Err(Error::SizeCap {
            n: k.rows(),
            cap: crate::kernels::DEFAULT_DENSE_CAP,
        });
    }
    let ks = basis.transform_dense(k)?;
    relative_error_transformed(&ks, a)
}

/// Sidecar metadata written next to MatrixMarket dumps.
#[derive(Debug, Clone, Serialize)]
pub struct PatternMetadata {
    #[serde(rename = "N")]
    pub n: usize,
    pub eta: f64,
    pub q: usize,
    pub tau: f64,
    pub nnz: usize,
    pub level_block_counts: Vec<Vec<usize>>,
}
