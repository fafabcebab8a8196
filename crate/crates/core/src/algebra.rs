//! Fixed-pattern arithmetic on compressed matrices and the randomized
//! Frobenius error estimator.

use std::sync::Arc;

use rayon::prelude::*;

use crate::compression::{SCompressedMatrix, SparsityPattern};
use crate::dense::{gemm, DenseMatrix};
use crate::error::{Error, Result};

/// Number of random probe columns used by [`error_estimate`] by default.
pub const DEFAULT_PROBES: usize = 10;

/// Neumaier's compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn same_pattern(a: &Arc<SparsityPattern>, b: &Arc<SparsityPattern>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn check_target(a: &SCompressedMatrix, target: &SparsityPattern, rows: usize, cols: usize) -> Result<()> {
    if target.nrows() != rows || target.ncols() != cols {
        return Err(Error::mismatch(format!(
            "target pattern is {}x{}, expected {rows}x{cols}",
            target.nrows(),
            target.ncols()
        )));
    }
    let _ = a;
    Ok(())
}

/// `alpha A + beta B` on `target`; entries outside `target` are dropped.
pub fn formatted_axpby(
    alpha: f64,
    a: &SCompressedMatrix,
    beta: f64,
    b: &SCompressedMatrix,
    target: &Arc<SparsityPattern>,
) -> Result<SCompressedMatrix> {
    a.check_compatible(b)?;
    check_target(a, target, a.nrows(), a.ncols())?;
    let ra = a.restrict_to(target.clone())?;
    let rb = b.restrict_to(target.clone())?;
    let mut out = ra;
    for (o, y) in out.values_mut().iter_mut().zip(rb.values()) {
        *o = alpha * *o + beta * y;
    }
    let (rbasis, cbasis) = a.merged_bases(b);
    out.set_bases_unchecked(rbasis, cbasis);
    Ok(out)
}

/// `A + B` on `target`.
pub fn formatted_add(a: &SCompressedMatrix, b: &SCompressedMatrix, target: &Arc<SparsityPattern>) -> Result<SCompressedMatrix> {
    formatted_axpby(1.0, a, 1.0, b, target)
}

/// Reusable schedule for `C = A B` restricted to a target pattern.
///
/// Sparse operands: every target entry is the plain sum of `a_ik b_kj` in
/// ascending `k`. Rows are evaluated either by walking the columns of `B` for
/// each target entry or by scattering whole rows of `B`, whichever touches
/// fewer entries; both visit `k` in the same order. When the sparse work comes
/// close to a dense product, blocks of rows go through a dense kernel instead.
/// Either way the result depends only on the patterns, never on threading.
#[derive(Debug, Clone)]
pub struct PatternedProductPlan {
    a_pattern: Arc<SparsityPattern>,
    b_pattern: Arc<SparsityPattern>,
    target: Arc<SparsityPattern>,
    b_transposed: SparsityPattern,
    b_source: Vec<usize>,
    scatter_rows: Vec<bool>,
    dense: bool,
}

/// Dense products run this many times faster per multiply-add.
const DENSE_SPEEDUP: u64 = 16;
/// Largest dense copy of `B` (entries) the dense route may allocate.
const DENSE_B_CAP: usize = 1 << 25;
const DENSE_ROW_BLOCK: usize = 128;

impl PatternedProductPlan {
    pub fn new(
        a_pattern: Arc<SparsityPattern>,
        b_pattern: Arc<SparsityPattern>,
        target: Arc<SparsityPattern>,
    ) -> Result<Self> {
        if a_pattern.ncols() != b_pattern.nrows() {
            return Err(Error::mismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                a_pattern.nrows(),
                a_pattern.ncols(),
                b_pattern.nrows(),
                b_pattern.ncols()
            )));
        }
        if target.nrows() != a_pattern.nrows() || target.ncols() != b_pattern.ncols() {
            return Err(Error::mismatch("target pattern has the wrong shape"));
        }
        let (b_transposed, b_source) = b_pattern.transpose_with_map();
        let scatter_rows = (0..target.nrows())
            .map(|i| {
                let gather: usize = target.row(i).iter().map(|&j| b_transposed.row(j as usize).len()).sum();
                let scatter: usize = a_pattern.row(i).iter().map(|&k| b_pattern.row(k as usize).len()).sum();
                scatter < gather
            })
            .collect();
        let mut plan = Self {
            a_pattern,
            b_pattern,
            target,
            b_transposed,
            b_source,
            scatter_rows,
            dense: false,
        };
        let (m, k, n) = (plan.a_pattern.nrows() as u64, plan.a_pattern.ncols() as u64, plan.b_pattern.ncols() as u64);
        plan.dense = (k * n) as usize <= DENSE_B_CAP && plan.sparse_flops() * DENSE_SPEEDUP >= m * k * n;
        Ok(plan)
    }

    pub fn target(&self) -> &Arc<SparsityPattern> {
        &self.target
    }

    /// Multiply-adds performed by one execution (zero products included).
    pub fn flop_count(&self) -> u64 {
        if self.dense {
            (self.a_pattern.nrows() * self.a_pattern.ncols() * self.b_pattern.ncols()) as u64
        } else {
            self.sparse_flops()
        }
    }

    #[cfg(test)]
    fn forced(mut self, dense: bool, scatter: bool) -> Self {
        self.dense = dense;
        self.scatter_rows.iter_mut().for_each(|r| *r = scatter);
        self
    }

    /// Whether execution goes through the dense kernel.
    pub fn is_dense(&self) -> bool {
        self.dense
    }

    fn sparse_flops(&self) -> u64 {
        let t = &self.target;
        (0..t.nrows())
            .map(|i| {
                if self.scatter_rows[i] {
                    self.a_pattern.row(i).iter().map(|&k| self.b_pattern.row(k as usize).len() as u64).sum::<u64>()
                } else {
                    t.row(i).iter().map(|&j| self.b_transposed.row(j as usize).len() as u64).sum::<u64>()
                }
            })
            .sum()
    }

    pub fn execute(&self, a: &SCompressedMatrix, b: &SCompressedMatrix) -> Result<SCompressedMatrix> {
        if !same_pattern(a.pattern(), &self.a_pattern) || !same_pattern(b.pattern(), &self.b_pattern) {
            return Err(Error::mismatch("operands do not match the plan's patterns"));
        }
        if let (Some(x), Some(y)) = (a.col_basis(), b.row_basis()) {
            if !Arc::ptr_eq(x, y) {
                return Err(Error::mismatch("inner samplet bases differ"));
            }
        }
        if self.dense {
            return self.execute_dense(a, b);
        }
        let bt_vals: Vec<f64> = self.b_source.iter().map(|&p| b.values()[p]).collect();
        let t = &self.target;
        let n_inner = self.a_pattern.ncols();
        let n_out = t.ncols();
        let mut values = vec![0.0; t.nnz()];
        // Split the output along rows; each row is computed sequentially.
        let mut row_slices: Vec<(usize, &mut [f64])> = Vec::with_capacity(t.nrows());
        let mut rest = values.as_mut_slice();
        for i in 0..t.nrows() {
            let (head, tail) = rest.split_at_mut(t.row(i).len());
            row_slices.push((i, head));
            rest = tail;
        }
        let a_pat = &self.a_pattern;
        let b_pat = &self.b_pattern;
        let bt = &self.b_transposed;
        row_slices.par_chunks_mut(16).for_each_init(
            || (vec![0.0; n_inner], vec![0.0; n_out]),
            |(w, acc), chunk| {
                for (i, out) in chunk.iter_mut() {
                    let i = *i;
                    let (cols, avals) = (&a_pat.col_idx()[a_pat.row_range(i)], &a.values()[a_pat.row_range(i)]);
                    if self.scatter_rows[i] {
                        for (&k, &aik) in cols.iter().zip(avals) {
                            let r = b_pat.row_range(k as usize);
                            for (&j, &bv) in b_pat.col_idx()[r.clone()].iter().zip(&b.values()[r]) {
                                acc[j as usize] += aik * bv;
                            }
                        }
                        for (o, &j) in out.iter_mut().zip(t.row(i)) {
                            *o = acc[j as usize];
                        }
                        let touched: usize = cols.iter().map(|&k| b_pat.row(k as usize).len()).sum();
                        if touched >= n_out {
                            acc.fill(0.0);
                        } else {
                            for &k in cols {
                                for &j in b_pat.row(k as usize) {
                                    acc[j as usize] = 0.0;
                                }
                            }
                        }
                    } else {
                        for (&k, &aik) in cols.iter().zip(avals) {
                            w[k as usize] = aik;
                        }
                        for (o, &j) in out.iter_mut().zip(t.row(i)) {
                            let r = bt.row_range(j as usize);
                            let mut sum = 0.0;
                            for (&k, &bv) in bt.col_idx()[r.clone()].iter().zip(&bt_vals[r]) {
                                sum += w[k as usize] * bv;
                            }
                            *o = sum;
                        }
                        for &k in cols {
                            w[k as usize] = 0.0;
                        }
                    }
                }
            },
        );
        let mut out = SCompressedMatrix::new(self.target.clone(), values)?;
        out.set_bases_unchecked(a.row_basis().cloned(), b.col_basis().cloned());
        Ok(out)
    }

    fn execute_dense(&self, a: &SCompressedMatrix, b: &SCompressedMatrix) -> Result<SCompressedMatrix> {
        let (k, n) = (self.a_pattern.ncols(), self.b_pattern.ncols());
        let bd = b.to_dense();
        let t = &self.target;
        let a_pat = &self.a_pattern;
        let blocks: Vec<Vec<f64>> = (0..t.nrows())
            .step_by(DENSE_ROW_BLOCK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(ad, cd): &mut (Vec<f64>, Vec<f64>), r0| {
                    let r1 = (r0 + DENSE_ROW_BLOCK).min(t.nrows());
                    let nb = r1 - r0;
                    ad.clear();
                    ad.resize(nb * k, 0.0);
                    for i in r0..r1 {
                        for p in a_pat.row_range(i) {
                            ad[(i - r0) * k + a_pat.col_idx()[p] as usize] = a.values()[p];
                        }
                    }
                    cd.clear();
                    cd.resize(nb * n, 0.0);
                    gemm(nb, k, n, 1.0, (ad, k, 1), (bd.as_slice(), n, 1), 0.0, (cd, n));
                    (r0..r1)
                        .flat_map(|i| t.row(i).iter().map(move |&j| (i, j as usize)))
                        .map(|(i, j)| cd[(i - r0) * n + j])
                        .collect()
                },
            )
            .collect();
        let mut out = SCompressedMatrix::new(self.target.clone(), blocks.concat())?;
        out.set_bases_unchecked(a.row_basis().cloned(), b.col_basis().cloned());
        Ok(out)
    }
}

/// `A B` restricted to `target`.
pub fn formatted_multiply(
    a: &SCompressedMatrix,
    b: &SCompressedMatrix,
    target: &Arc<SparsityPattern>,
) -> Result<SCompressedMatrix> {
    PatternedProductPlan::new(a.pattern().clone(), b.pattern().clone(), target.clone())?.execute(a, b)
}

/// Largest deviation of `c` from the dense product `A B` over the entries of
/// `c`'s pattern, each scaled by `(|A| |B|)_ij`. Entries where that scale
/// vanishes must match exactly.
pub fn masked_product_deviation(a: &SCompressedMatrix, b: &SCompressedMatrix, c: &SCompressedMatrix) -> Result<f64> {
    let cap = crate::kernels::DEFAULT_DENSE_CAP;
    if a.nrows().max(a.ncols()).max(b.ncols()) > cap {
        return Err(Error::SizeCap {
            n: a.nrows().max(a.ncols()).max(b.ncols()),
            cap,
        });
    }
    if a.ncols() != b.nrows() || c.nrows() != a.nrows() || c.ncols() != b.ncols() {
        return Err(Error::mismatch("product shapes do not agree"));
    }
    let (da, db) = (a.to_dense(), b.to_dense());
    let full = da.matmul(&db)?;
    let abs = |m: &DenseMatrix| {
        let mut m = m.clone();
        m.as_mut_slice().iter_mut().for_each(|v| *v = v.abs());
        m
    };
    let bound = abs(&da).matmul(&abs(&db))?;
    let pat = c.pattern();
    let mut worst = 0.0f64;
    for i in 0..pat.nrows() {
        for p in pat.row_range(i) {
            let j = pat.col_idx()[p] as usize;
            let diff = (c.values()[p] - full.get(i, j)).abs();
            let scale = bound.get(i, j);
            worst = worst.max(if scale > 0.0 {
                diff / scale
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            });
        }
    }
    Ok(worst)
}

/// Sparse times dense.
pub fn apply(a: &SCompressedMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    a.apply(v)
}

pub fn frobenius_norm(a: &SCompressedMatrix) -> f64 {
    a.frobenius_norm()
}

/// Anything that can be applied to an `ncols x k` multivector.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix>;
}

impl LinearOperator for SCompressedMatrix {
    fn nrows(&self) -> usize {
        SCompressedMatrix::nrows(self)
    }

    fn ncols(&self) -> usize {
        SCompressedMatrix::ncols(self)
    }

    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.apply(x)
    }
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.matmul(x)
    }
}

/// The identity of a given size.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn nrows(&self) -> usize {
        self.0
    }

    fn ncols(&self) -> usize {
        self.0
    }

    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.0 {
            return Err(Error::mismatch("identity applied to wrong size"));
        }
        Ok(x.clone())
    }
}

/// `A - B`.
pub struct Difference<'a>(pub &'a dyn LinearOperator, pub &'a dyn LinearOperator);

impl LinearOperator for Difference<'_> {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }

    fn ncols(&self) -> usize {
        self.0.ncols()
    }

    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.apply_to(x)?.sub(&self.1.apply_to(x)?)
    }
}

/// `A B`, applied right to left.
pub struct Product<'a>(pub &'a dyn LinearOperator, pub &'a dyn LinearOperator);

impl LinearOperator for Product<'_> {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }

    fn ncols(&self) -> usize {
        self.1.ncols()
    }

    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.apply_to(&self.1.apply_to(x)?)
    }
}

/// `A + mu I`.
pub struct Shifted<'a>(pub &'a dyn LinearOperator, pub f64);

impl LinearOperator for Shifted<'_> {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }

    fn ncols(&self) -> usize {
        self.0.ncols()
    }

    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = self.0.apply_to(x)?;
        for (yv, xv) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *yv += self.1 * xv;
        }
        Ok(y)
    }
}

/// `||A X||_F / ||X||_F` with `X` an `ncols x k` matrix of i.i.d. uniform
/// `[0, 1)` entries drawn from SplitMix64 with `seed`.
pub fn error_estimate(op: &dyn LinearOperator, k: usize, seed: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("need at least one probe column"));
    }
    let x = DenseMatrix::random_uniform(op.ncols(), k, seed);
    let ax = op.apply_to(&x)?;
    Ok(ax.frobenius_norm() / x.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::{build_pattern, compress_dense};
    use crate::geometry::PointCloud;
    use crate::kernels::{assemble_dense, KernelSpec};
    use crate::samplets::SampletBasis;

    fn kernel_matrix(n: usize, seed: u64) -> SCompressedMatrix {
        let pc = PointCloud::random_uniform(n, 2, seed).unwrap();
        let b = Arc::new(SampletBasis::from_points(&pc, 4, None).unwrap());
        let spec = KernelSpec::exponential(1.0, 1.0 / n as f64).unwrap();
        let k = assemble_dense(&spec, b.points()).unwrap();
        let p = Arc::new(build_pattern(&b, 1.25).unwrap());
        compress_dense(&b, &k, &p, 0.0).unwrap()
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let mut s = CompensatedSum::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn add_properties() {
        let a = kernel_matrix(300, 1);
        let p = a.pattern().clone();
        let z = formatted_axpby(1.0, &a, -1.0, &a, &p).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let zero = SCompressedMatrix::zeros(p.clone());
        assert_eq!(formatted_add(&a, &zero, &p).unwrap().values(), a.values());
    }

    #[test]
    fn multiply_by_identity_restricts() {
        let a = kernel_matrix(256, 2);
        let i = SCompressedMatrix::identity(256);
        let c = formatted_multiply(&a, &i, a.pattern()).unwrap();
        assert_eq!(c.values(), a.values());
    }

    fn check_against_dense(a: &SCompressedMatrix, b: &SCompressedMatrix, c: &SCompressedMatrix) {
        let dev = masked_product_deviation(a, b, c).unwrap();
        assert!(dev <= 1e-12, "{dev}");
    }

    #[test]
    fn multiply_matches_dense_product_on_every_route() {
        let a = kernel_matrix(512, 3);
        let plan = PatternedProductPlan::new(a.pattern().clone(), a.pattern().clone(), a.pattern().clone()).unwrap();
        let gather = plan.clone().forced(false, false).execute(&a, &a).unwrap();
        let scatter = plan.clone().forced(false, true).execute(&a, &a).unwrap();
        let dense = plan.forced(true, false).execute(&a, &a).unwrap();
        assert_eq!(gather.values(), scatter.values());
        for c in [&gather, &dense] {
            check_against_dense(&a, &a, c);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn random_sparse_products(m in 1usize..20, k in 1usize..20, n in 1usize..20, seed in 0u64..500) {
            let r = DenseMatrix::random_uniform(3 * m.max(k).max(n), m.max(k).max(n), seed);
            let sparse = |rows: usize, cols: usize, off: usize, keep: f64| {
                let d = DenseMatrix::from_fn(rows, cols, |i, j| {
                    let u = r.get(off + i, j);
                    if u < keep { u - 0.5 * keep } else { 0.0 }
                });
                let pat = (0..rows)
                    .map(|i| (0..cols).filter(|&j| d.get(i, j) != 0.0).map(|j| j as u32).collect())
                    .collect();
                SCompressedMatrix::from_dense(&d, Arc::new(SparsityPattern::from_rows(rows, cols, pat).unwrap())).unwrap()
            };
            let a = sparse(m, k, 0, 0.4);
            let b = sparse(k, n, r.rows() / 3, 0.4);
            let t = sparse(m, n, 2 * r.rows() / 3, 0.6);
            let plan = PatternedProductPlan::new(a.pattern().clone(), b.pattern().clone(), t.pattern().clone()).unwrap();
            let gather = plan.clone().forced(false, false).execute(&a, &b).unwrap();
            let scatter = plan.clone().forced(false, true).execute(&a, &b).unwrap();
            proptest::prop_assert_eq!(gather.values(), scatter.values());
            check_against_dense(&a, &b, &gather);
            check_against_dense(&a, &b, &plan.forced(true, false).execute(&a, &b).unwrap());
        }
    }

    #[test]
    fn estimator_trivial_cases() {
        let i = Identity(50);
        assert!((error_estimate(&i, 10, 1).unwrap() - 1.0).abs() < 1e-15);
        let two = SCompressedMatrix::identity(50).shifted(1.0).unwrap();
        assert!((error_estimate(&two, 10, 1).unwrap() - 2.0).abs() < 1e-15);
        let zero = Difference(&i, &i);
        assert_eq!(error_estimate(&zero, 10, 1).unwrap(), 0.0);
        assert!(error_estimate(&i, 0, 1).is_err());
    }

    #[test]
    fn apply_matches_dense() {
        let a = kernel_matrix(400, 4);
        let v = DenseMatrix::random_uniform(400, 3, 5);
        let s = apply(&a, &v).unwrap();
        let d = a.to_dense().matmul(&v).unwrap();
        assert!(s.sub(&d).unwrap().max_abs() <= 1e-12 * d.max_abs());
        assert!((frobenius_norm(&a) - a.to_dense().frobenius_norm()).abs() < 1e-14);
    }
}
