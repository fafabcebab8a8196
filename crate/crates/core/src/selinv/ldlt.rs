use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::ordering::{fill_reducing_ordering, OrderingMethod};
use crate::compression::{SCompressedMatrix, SparsityPattern};
use crate::dense::{gemm, DenseMatrix};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
/// Widest supernode kept as one dense panel.
const MAX_SUPERNODE: usize = 128;
/// Relative pivot floor.
const PIVOT_TOL: f64 = 1e-14;
/// Tolerated share of explicit zeros when merging columns into a supernode.
const RELAX: f64 = 0.1;
/// Column block width inside a supernodal panel.
const PANEL_BLOCK: usize = 32;

/// Pattern-only part of the factorization, shared by every shift.
#[derive(Debug)]
pub struct SymbolicFactor {
    n: usize,
    input: Arc<SparsityPattern>,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    sn_first: Vec<usize>,
    sn_rows_ptr: Vec<usize>,
    sn_rows: Vec<u32>,
    sn_data_ptr: Vec<usize>,
    col_sn: Vec<u32>,
    nnz_input_lower: usize,
}

impl SymbolicFactor {
    /// Ordering, elimination tree and supernodal structure of `pattern`.
    pub fn analyze(pattern: &Arc<SparsityPattern>, perm: Vec<usize>) -> Result<Self> {
        let n = pattern.nrows();
        if pattern.ncols() != n {
            return Err(Error::mismatch("factorization needs a square matrix"));
        }
        if perm.len() != n {
            return Err(Error::mismatch("permutation length differs from matrix size"));
        }
        let mut pinv = vec![NONE; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || pinv[old] != NONE {
                return Err(Error::invalid("ordering is not a permutation"));
            }
            pinv[old] = new;
        }
        // Strictly lower rows of the permuted pattern: lower[k] = {i < k}.
        let mut lower_ptr = vec![0usize; n + 1];
        let mut nnz_input_lower = 0;
        for i in 0..n {
            for &j in pattern.row(i) {
                let (a, b) = (pinv[i], pinv[j as usize]);
                if b < a {
                    lower_ptr[a + 1] += 1;
                }
                if b <= a {
                    nnz_input_lower += 1;
                }
            }
        }
        for k in 0..n {
            lower_ptr[k + 1] += lower_ptr[k];
        }
        let mut lower = vec![0u32; lower_ptr[n]];
        let mut next = lower_ptr.clone();
        for i in 0..n {
            for &j in pattern.row(i) {
                let (a, b) = (pinv[i], pinv[j as usize]);
                if b < a {
                    lower[next[a]] = b as u32;
                    next[a] += 1;
                }
            }
        }

        // Elimination tree with path compression.
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &i0 in &lower[lower_ptr[k]..lower_ptr[k + 1]] {
                let mut i = i0 as usize;
                while i != NONE && i < k {
                    let inext = ancestor[i];
                    ancestor[i] = k;
                    if inext == NONE {
                        parent[i] = k;
                    }
                    i = inext;
                }
            }
        }

        // Row patterns of L via elimination-tree reaches; first pass counts.
        let mut mark = vec![NONE; n];
        let mut colcount = vec![0usize; n];
        let reach = |k: usize, mark: &mut [usize], visit: &mut dyn FnMut(usize)| {
            mark[k] = k;
            for &i0 in &lower[lower_ptr[k]..lower_ptr[k + 1]] {
                let mut i = i0 as usize;
                while mark[i] != k {
                    mark[i] = k;
                    visit(i);
                    i = parent[i];
                    if i == NONE {
                        break;
                    }
                }
            }
        };
        for k in 0..n {
            reach(k, &mut mark, &mut |j| colcount[j] += 1);
        }

        // Supernodes follow chains of the elimination tree. A column joins
        // its child's supernode when the explicit zeros this adds stay below
        // a fraction of the stored trapezoid.
        let mut sn_first = vec![0usize];
        let mut true_entries = if n > 0 { colcount[0] + 1 } else { 0 };
        for j in 1..n {
            let start = *sn_first.last().unwrap();
            let w_new = j - start + 1;
            let mut join = parent[j - 1] == j && w_new <= MAX_SUPERNODE;
            if join {
                let rows_new = w_new + colcount[j];
                let trapezoid = w_new * rows_new - w_new * (w_new - 1) / 2;
                let stored_true = true_entries + colcount[j] + 1;
                join = colcount[j - 1] == colcount[j] + 1 || (trapezoid - stored_true) as f64 <= RELAX * trapezoid as f64;
            }
            if join {
                true_entries += colcount[j] + 1;
            } else {
                sn_first.push(j);
                true_entries = colcount[j] + 1;
            }
        }
        if n > 0 {
            sn_first.push(n);
        } else {
            sn_first.clear();
            sn_first.push(0);
        }
        let ns = sn_first.len() - 1;
        let mut col_sn = vec![0u32; n];
        for s in 0..ns {
            for c in sn_first[s]..sn_first[s + 1] {
                col_sn[c] = s as u32;
            }
        }
        // Row lists: the supernode's own columns, then the structure of its
        // last column, which contains every other column's rows below the block.
        let mut sn_rows_ptr = vec![0usize; ns + 1];
        for s in 0..ns {
            let w = sn_first[s + 1] - sn_first[s];
            sn_rows_ptr[s + 1] = sn_rows_ptr[s] + w + colcount[sn_first[s + 1] - 1];
        }
        let mut sn_rows = vec![0u32; sn_rows_ptr[ns]];
        let mut fill = sn_rows_ptr.clone();
        for s in 0..ns {
            for c in sn_first[s]..sn_first[s + 1] {
                sn_rows[fill[s]] = c as u32;
                fill[s] += 1;
            }
        }
        mark.iter_mut().for_each(|m| *m = NONE);
        for k in 0..n {
            reach(k, &mut mark, &mut |j| {
                let s = col_sn[j] as usize;
                if sn_first[s + 1] - 1 == j {
                    sn_rows[fill[s]] = k as u32;
                    fill[s] += 1;
                }
            });
        }
        let mut sn_data_ptr = vec![0usize; ns + 1];
        for s in 0..ns {
            let w = sn_first[s + 1] - sn_first[s];
            sn_data_ptr[s + 1] = sn_data_ptr[s] + (sn_rows_ptr[s + 1] - sn_rows_ptr[s]) * w;
        }
        Ok(Self {
            n,
            input: pattern.clone(),
            perm,
            pinv,
            parent,
            sn_first,
            sn_rows_ptr,
            sn_rows,
            sn_data_ptr,
            col_sn,
            nnz_input_lower,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `perm[new] = old`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Elimination tree of the permuted matrix; `None` marks roots.
    pub fn etree(&self) -> Vec<Option<usize>> {
        self.parent.iter().map(|&p| (p != NONE).then_some(p)).collect()
    }

    pub fn supernode_count(&self) -> usize {
        self.sn_first.len() - 1
    }

    /// Entries of `L` including the unit diagonal.
    pub fn nnz_l(&self) -> usize {
        (0..self.supernode_count())
            .map(|s| {
                let (w, r) = self.sn_dims(s);
                (0..w).map(|k| r - k).sum::<usize>()
            })
            .sum()
    }

    /// Entries of the lower triangle of the input, diagonal included.
    pub fn nnz_input_lower(&self) -> usize {
        self.nnz_input_lower
    }

    /// Rows of column `j` of `L` (permuted numbering), diagonal first.
    pub fn column_pattern(&self, j: usize) -> Vec<usize> {
        let s = self.col_sn[j] as usize;
        self.rows(s).iter().map(|&r| r as usize).filter(|&r| r >= j).collect()
    }

    #[inline]
    fn sn_dims(&self, s: usize) -> (usize, usize) {
        (
            self.sn_first[s + 1] - self.sn_first[s],
            self.sn_rows_ptr[s + 1] - self.sn_rows_ptr[s],
        )
    }

    #[inline]
    fn rows(&self, s: usize) -> &[u32] {
        &self.sn_rows[self.sn_rows_ptr[s]..self.sn_rows_ptr[s + 1]]
    }

    /// Position of `(r, c)` (permuted, `r >= c`) in supernodal storage.
    #[inline]
    fn locate(&self, r: usize, c: usize) -> Option<usize> {
        let s = self.col_sn[c] as usize;
        let f = self.sn_first[s];
        let w = self.sn_first[s + 1] - f;
        let pos = self.rows(s).binary_search(&(r as u32)).ok()?;
        Some(self.sn_data_ptr[s] + pos * w + (c - f))
    }

    /// Positions of `rows[from..]` inside the row list of supernode `t`.
    fn relative_positions(&self, t: usize, rows: &[u32], out: &mut Vec<usize>) {
        out.clear();
        let trows = self.rows(t);
        let mut k = trows.partition_point(|&x| x < rows[0]);
        for &r in rows {
            while trows[k] < r {
                k += 1;
            }
            debug_assert_eq!(trows[k], r);
            out.push(k);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorStats {
    pub n: usize,
    pub nnz_l: usize,
    pub fill_ratio: f64,
    pub supernodes: usize,
    pub min_pivot: f64,
    pub max_pivot: f64,
}

/// `P (A + mu I) P^T = L D L^T` with supernodal storage of `L`.
#[derive(Debug, Clone)]
pub struct LdltFactor {
    symbolic: Arc<SymbolicFactor>,
    data: Vec<f64>,
    d: Vec<f64>,
    mu: f64,
}

impl LdltFactor {
    /// Numeric factorization of `A + mu I` using a precomputed analysis of
    /// `A`'s pattern.
    pub fn factorize(symbolic: &Arc<SymbolicFactor>, a: &SCompressedMatrix, mu: f64) -> Result<Self> {
        let sym = symbolic.as_ref();
        if !Arc::ptr_eq(a.pattern(), &sym.input) && **a.pattern() != *sym.input {
            return Err(Error::mismatch("matrix pattern differs from the analyzed pattern"));
        }
        if !mu.is_finite() {
            return Err(Error::invalid("shift must be finite"));
        }
        let n = sym.n;
        let mut data = vec![0.0; *sym.sn_data_ptr.last().unwrap_or(&0)];
        // Scatter the lower triangle of P A P^T.
        let pat = a.pattern();
        for i in 0..n {
            for p in pat.row_range(i) {
                let j = pat.col_idx()[p] as usize;
                let (r, c) = (sym.pinv[i], sym.pinv[j]);
                if c <= r {
                    let pos = sym.locate(r, c).expect("input entry outside symbolic structure");
                    data[pos] = a.values()[p];
                }
            }
        }
        for c in 0..n {
            let pos = sym.locate(c, c).unwrap();
            data[pos] += mu;
        }

        let mut d = vec![0.0; n];
        let mut max_d: f64 = 0.0;
        let mut v = Vec::new();
        let mut wbuf = Vec::new();
        let mut ubuf = Vec::new();
        let mut wblk = Vec::new();
        let mut rel = Vec::new();
        for s in 0..sym.supernode_count() {
            let f = sym.sn_first[s];
            let (w, nr) = sym.sn_dims(s);
            let off = sym.sn_data_ptr[s];
            {
                let panel = &mut data[off..off + nr * w];
                // Blocked LDL^T of the panel: earlier column blocks are
                // applied with one product, the block itself left-looking.
                for c0 in (0..w).step_by(PANEL_BLOCK) {
                    let c1 = (c0 + PANEL_BLOCK).min(w);
                    let nb = c1 - c0;
                    if c0 > 0 {
                        wblk.clear();
                        for r in c0..c1 {
                            wblk.extend((0..c0).map(|p| panel[r * w + p] * d[f + p]));
                        }
                        let tail = &mut panel[c0 * w..];
                        let a_copy: Vec<f64> = (0..nr - c0).flat_map(|r| tail[r * w..r * w + c0].to_vec()).collect();
                        gemm(
                            nr - c0,
                            c0,
                            nb,
                            -1.0,
                            (&a_copy, c0, 1),
                            (&wblk, 1, c0),
                            1.0,
                            (&mut tail[c0..], w),
                        );
                    }
                    for k in c0..c1 {
                        v.clear();
                        v.extend((c0..k).map(|p| panel[k * w + p] * d[f + p]));
                        let dk = panel[k * w + k] - dot(&panel[k * w + c0..k * w + k], &v);
                        if !(dk > 0.0) || dk <= PIVOT_TOL * max_d {
                            return Err(Error::NotPositiveDefinite {
                                column: sym.perm[f + k],
                                pivot: dk,
                            });
                        }
                        max_d = max_d.max(dk);
                        d[f + k] = dk;
                        panel[k * w + k] = 1.0;
                        for i in k + 1..nr {
                            let x = panel[i * w + k] - dot(&panel[i * w + c0..i * w + k], &v);
                            panel[i * w + k] = x / dk;
                        }
                    }
                }
                for k in 0..w {
                    for j in k + 1..w {
                        panel[k * w + j] = 0.0;
                    }
                }
            }
            let m = nr - w;
            if m == 0 {
                continue;
            }
            // W = L_R D
            wbuf.clear();
            for p in 0..m {
                for k in 0..w {
                    wbuf.push(data[off + (w + p) * w + k] * d[f + k]);
                }
            }
            let rows = &sym.rows(s)[w..];
            let (head, tail) = data.split_at_mut(sym.sn_data_ptr[s + 1]);
            let lr = &head[off + w * w..];
            let mut q0 = 0;
            while q0 < m {
                let c = rows[q0] as usize;
                let t = sym.col_sn[c] as usize;
                let ft = sym.sn_first[t];
                let wt = sym.sn_first[t + 1] - ft;
                let q1 = q0 + rows[q0..].partition_point(|&r| (r as usize) < ft + wt);
                sym.relative_positions(t, &rows[q0..], &mut rel);
                let toff = sym.sn_data_ptr[t] - sym.sn_data_ptr[s + 1];
                let target = &mut tail[toff..toff + sym.sn_dims(t).1 * wt];
                let nq = q1 - q0;
                // U = L_R[q0..] W[q0..q1]^T
                ubuf.clear();
                ubuf.resize((m - q0) * nq, 0.0);
                gemm(
                    m - q0,
                    w,
                    nq,
                    1.0,
                    (&lr[q0 * w..], w, 1),
                    (&wbuf[q0 * w..], 1, w),
                    0.0,
                    (&mut ubuf, nq),
                );
                for p in q0..m {
                    let trow = &mut target[rel[p - q0] * wt..(rel[p - q0] + 1) * wt];
                    let urow = &ubuf[(p - q0) * nq..(p - q0 + 1) * nq];
                    for (c, u) in urow[..nq.min(p - q0 + 1)].iter().enumerate() {
                        trow[rows[q0 + c] as usize - ft] -= u;
                    }
                }
                q0 = q1;
            }
        }
        Ok(Self {
            symbolic: symbolic.clone(),
            data,
            d,
            mu,
        })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicFactor> {
        &self.symbolic
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Diagonal of `D` in permuted order.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn perm(&self) -> &[usize] {
        &self.symbolic.perm
    }

    pub fn stats(&self) -> FactorStats {
        let nnz_l = self.symbolic.nnz_l();
        FactorStats {
            n: self.symbolic.n,
            nnz_l,
            fill_ratio: nnz_l as f64 / self.symbolic.nnz_input_lower.max(1) as f64,
            supernodes: self.symbolic.supernode_count(),
            min_pivot: self.d.iter().copied().fold(f64::INFINITY, f64::min),
            max_pivot: self.d.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Dense unit lower factor, for checks at small sizes.
    pub fn l_dense(&self) -> DenseMatrix {
        let sym = &self.symbolic;
        let mut l = DenseMatrix::zeros(sym.n, sym.n);
        for s in 0..sym.supernode_count() {
            let f = sym.sn_first[s];
            let (w, _) = sym.sn_dims(s);
            for (pi, &r) in sym.rows(s).iter().enumerate() {
                for k in 0..w {
                    if r as usize >= f + k {
                        l.set(r as usize, f + k, self.data[sym.sn_data_ptr[s] + pi * w + k]);
                    }
                }
            }
        }
        l
    }

    /// `(A + mu I)^{-1} B` for an `N x k` right-hand side in original order.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let sym = &self.symbolic;
        let n = sym.n;
        if b.rows() != n {
            return Err(Error::mismatch(format!("right-hand side has {} rows, expected {n}", b.rows())));
        }
        let k = b.cols();
        let mut y = vec![0.0; n * k];
        for new in 0..n {
            y[new * k..(new + 1) * k].copy_from_slice(b.row(sym.perm[new]));
        }
        let mut tmp = vec![0.0; k];
        for s in 0..sym.supernode_count() {
            let f = sym.sn_first[s];
            let (w, nr) = sym.sn_dims(s);
            let off = sym.sn_data_ptr[s];
            let rows = sym.rows(s);
            for c in 0..w {
                tmp.copy_from_slice(&y[(f + c) * k..(f + c + 1) * k]);
                for i in c + 1..nr {
                    let l = self.data[off + i * w + c];
                    if l != 0.0 {
                        let r = rows[i] as usize;
                        for (yv, t) in y[r * k..(r + 1) * k].iter_mut().zip(&tmp) {
                            *yv -= l * t;
                        }
                    }
                }
            }
        }
        for j in 0..n {
            let dj = self.d[j];
            y[j * k..(j + 1) * k].iter_mut().for_each(|v| *v /= dj);
        }
        for s in (0..sym.supernode_count()).rev() {
            let f = sym.sn_first[s];
            let (w, nr) = sym.sn_dims(s);
            let off = sym.sn_data_ptr[s];
            let rows = sym.rows(s);
            for c in (0..w).rev() {
                tmp.iter_mut().for_each(|t| *t = 0.0);
                for i in c + 1..nr {
                    let l = self.data[off + i * w + c];
                    if l != 0.0 {
                        let r = rows[i] as usize;
                        for (t, yv) in tmp.iter_mut().zip(&y[r * k..(r + 1) * k]) {
                            *t += l * yv;
                        }
                    }
                }
                for (yv, t) in y[(f + c) * k..(f + c + 1) * k].iter_mut().zip(&tmp) {
                    *yv -= t;
                }
            }
        }
        let mut out = DenseMatrix::zeros(n, k);
        for new in 0..n {
            out.row_mut(sym.perm[new]).copy_from_slice(&y[new * k..(new + 1) * k]);
        }
        Ok(out)
    }

    /// Entries of `(A + mu I)^{-1}` on `target` (original numbering). Every
    /// target entry must lie in the pattern of `L` after permutation.
    pub fn selected_inverse(&self, target: &Arc<SparsityPattern>) -> Result<SCompressedMatrix> {
        let sym = &self.symbolic;
        if target.nrows() != sym.n || target.ncols() != sym.n {
            return Err(Error::mismatch("target pattern has the wrong size"));
        }
        let z = self.inverse_on_factor_pattern();
        let missing: Vec<(usize, usize)> = (0..sym.n)
            .into_par_iter()
            .flat_map_iter(|i| {
                target.row(i).iter().filter_map(move |&j| {
                    let (a, b) = (sym.pinv[i], sym.pinv[j as usize]);
                    sym.locate(a.max(b), a.min(b)).is_none().then_some((i, j as usize))
                })
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::PatternNotContained {
                count: missing.len(),
                examples: missing.into_iter().take(5).collect(),
            });
        }
        let mut values = vec![0.0; target.nnz()];
        for i in 0..sym.n {
            for p in target.row_range(i) {
                let j = target.col_idx()[p] as usize;
                let (a, b) = (sym.pinv[i], sym.pinv[j]);
                values[p] = z[sym.locate(a.max(b), a.min(b)).unwrap()];
            }
        }
        SCompressedMatrix::new(target.clone(), values)
    }

    /// Backward sweep over supernodes: for each block of columns `J` with
    /// off-block rows `R`, `Z_RJ = -Z_RR Lhat` and
    /// `Z_JJ = (L_JJ D_J L_JJ^T)^{-1} + Lhat^T Z_RR Lhat` with
    /// `Lhat = L_RJ L_JJ^{-1}`. Storage mirrors `L`.
    fn inverse_on_factor_pattern(&self) -> Vec<f64> {
        let sym = &self.symbolic;
        let mut z = vec![0.0; self.data.len()];
        let mut lhat = Vec::new();
        let mut y = Vec::new();
        let mut rel = Vec::new();
        let (mut zsq, mut zbelow, mut corr) = (Vec::new(), Vec::new(), Vec::new());
        for s in (0..sym.supernode_count()).rev() {
            let f = sym.sn_first[s];
            let (w, nr) = sym.sn_dims(s);
            let m = nr - w;
            let off = sym.sn_data_ptr[s];
            let l = &self.data[off..off + nr * w];
            // Lhat
            lhat.clear();
            lhat.extend_from_slice(&l[w * w..]);
            for p in 0..m {
                let x = &mut lhat[p * w..(p + 1) * w];
                for kk in (0..w).rev() {
                    let mut acc = x[kk];
                    for i in kk + 1..w {
                        acc -= x[i] * l[i * w + kk];
                    }
                    x[kk] = acc;
                }
            }
            // Y = Z_RR Lhat
            y.clear();
            y.resize(m * w, 0.0);
            let rows = &sym.rows(s)[w..];
            let mut q0 = 0;
            while q0 < m {
                let c = rows[q0] as usize;
                let t = sym.col_sn[c] as usize;
                let ft = sym.sn_first[t];
                let wt = sym.sn_first[t + 1] - ft;
                let q1 = q0 + rows[q0..].partition_point(|&r| (r as usize) < ft + wt);
                sym.relative_positions(t, &rows[q0..], &mut rel);
                let toff = sym.sn_data_ptr[t];
                let nq = q1 - q0;
                let zat = |p: usize, qq: usize| z[toff + rel[p - q0] * wt + rows[qq] as usize - ft];
                // Symmetric square block on Q = q0..q1 and the rectangle below it.
                zsq.clear();
                for a in q0..q1 {
                    for b in q0..q1 {
                        zsq.push(if a >= b { zat(a, b) } else { zat(b, a) });
                    }
                }
                zbelow.clear();
                for p in q1..m {
                    for qq in q0..q1 {
                        zbelow.push(zat(p, qq));
                    }
                }
                let below = m - q1;
                let (yq, yb) = y.split_at_mut(q1 * w);
                let yq = &mut yq[q0 * w..];
                gemm(nq, nq, w, 1.0, (&zsq, nq, 1), (&lhat[q0 * w..], w, 1), 1.0, (&mut *yq, w));
                if below > 0 {
                    gemm(below, nq, w, 1.0, (&zbelow, nq, 1), (&lhat[q0 * w..], w, 1), 1.0, (&mut *yb, w));
                    gemm(nq, below, w, 1.0, (&zbelow, 1, nq), (&lhat[q1 * w..], w, 1), 1.0, (&mut *yq, w));
                }
                q0 = q1;
            }
            // Inverse of the diagonal block: X = L_JJ^{-1}, inv = X^T D^{-1} X.
            let mut x = vec![0.0; w * w];
            for c in 0..w {
                x[c * w + c] = 1.0;
                for i in c + 1..w {
                    let mut acc = 0.0;
                    for kk in c..i {
                        acc -= l[i * w + kk] * x[kk * w + c];
                    }
                    x[i * w + c] = acc;
                }
            }
            corr.clear();
            corr.resize(w * w, 0.0);
            gemm(w, m, w, 1.0, (&lhat, 1, w), (&y, w, 1), 0.0, (&mut corr, w));
            let zs = &mut z[off..off + nr * w];
            for a in 0..w {
                for b in 0..=a {
                    let mut acc = 0.0;
                    for kk in a..w {
                        acc += x[kk * w + a] * x[kk * w + b] / self.d[f + kk];
                    }
                    zs[a * w + b] = acc + corr[a * w + b];
                }
            }
            for p in 0..m {
                for kk in 0..w {
                    zs[(w + p) * w + kk] = -y[p * w + kk];
                }
            }
        }
        z
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            s[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

/// Orders, analyzes and factorizes `A + mu I` in one call.
pub fn ldlt_factorize(a: &SCompressedMatrix, mu: f64, method: OrderingMethod) -> Result<LdltFactor> {
    let perm = fill_reducing_ordering(a.pattern(), method, a.row_basis().map(|b| b.as_ref()))?;
    let sym = Arc::new(SymbolicFactor::analyze(a.pattern(), perm)?);
    LdltFactor::factorize(&sym, a, mu)
}
