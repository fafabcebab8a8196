//! Orthonormal samplet basis built from per-cluster QR decompositions of
//! moment matrices, with fast forward and inverse transforms.
//!
//! Global coefficient layout: clusters are visited in depth-first pre-order.
//! The root contributes its scaling functions first, followed by its
//! samplets; every other cluster contributes only samplets. Each subtree
//! therefore owns one contiguous index range.

use std::ops::Range;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::geometry::{build_cluster_tree, ClusterTree, PointCloud};

/// Rows per batch when transforming dense matrices.
const BATCH: usize = 32;

/// Graded multi-indices of total degree `<= q` in `dim` variables.
pub fn multi_indices(dim: usize, q: usize) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(dim, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 0..=q as u32 {
        rec(dim, deg, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

/// `binom(q + dim, dim)`, the dimension of the polynomials of degree `<= q`.
pub fn moment_count(dim: usize, q: usize) -> usize {
    let mut c: usize = 1;
    for i in 1..=dim {
        c = c * (q + i) / i;
    }
    c
}

/// Moments `(x - center)^alpha` of the functions generated at one cluster.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub cluster: usize,
    pub center: Vec<f64>,
    /// `m_q x n_in`, rows in the order of [`multi_indices`].
    pub values: DenseMatrix,
}

/// Raw Dirac moments of points `range` of `pc` about `center`.
pub fn point_moments(pc: &PointCloud, range: Range<usize>, center: &[f64], alphas: &[Vec<u32>]) -> DenseMatrix {
    let n = range.len();
    let q = alphas.iter().map(|a| a.iter().sum::<u32>()).max().unwrap_or(0) as usize;
    let d = pc.dim();
    let mut m = DenseMatrix::zeros(alphas.len(), n);
    let mut pows = vec![0.0; d * (q + 1)];
    for (col, i) in range.enumerate() {
        let x = pc.point(i);
        for k in 0..d {
            let y = x[k] - center[k];
            let mut p = 1.0;
            for e in 0..=q {
                pows[k * (q + 1) + e] = p;
                p *= y;
            }
        }
        for (row, a) in alphas.iter().enumerate() {
            let mut v = 1.0;
            for k in 0..d {
                v *= pows[k * (q + 1) + a[k] as usize];
            }
            m.set(row, col, v);
        }
    }
    m
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Re-expansion of moments about `from` into moments about `to`:
/// `S[a][b] = prod_k binom(a_k, b_k) (from_k - to_k)^(a_k - b_k)` for `b <= a`.
fn shift_matrix(alphas: &[Vec<u32>], from: &[f64], to: &[f64]) -> DenseMatrix {
    let m = alphas.len();
    let delta: Vec<f64> = from.iter().zip(to).map(|(f, t)| f - t).collect();
    DenseMatrix::from_fn(m, m, |a, b| {
        let (aa, bb) = (&alphas[a], &alphas[b]);
        if aa.iter().zip(bb).any(|(x, y)| y > x) {
            return 0.0;
        }
        let mut v = 1.0;
        for k in 0..aa.len() {
            v *= binomial(aa[k], bb[k]) * delta[k].powi((aa[k] - bb[k]) as i32);
        }
        v
    })
}

/// Householder QR of an `n x m` matrix: returns the full orthogonal `Q`
/// (`n x n`) and `R` (`n x m`), with a nonnegative diagonal of `R`.
pub fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (n, m) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::new();
    for k in 0..n.min(m) {
        let norm = (k..n).map(|i| r.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = r.get(k, k);
        let beta = if alpha >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| r.get(i, k)).collect();
        v[0] -= beta;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..m {
            let s: f64 = (k..n).map(|i| v[i - k] * r.get(i, j)).sum::<f64>() * 2.0 / vnorm2;
            for i in k..n {
                r.set(i, j, r.get(i, j) - s * v[i - k]);
            }
        }
        for i in k + 1..n {
            r.set(i, k, 0.0);
        }
        let scale = (2.0 / vnorm2).sqrt();
        reflectors.push((k, v.into_iter().map(|x| x * scale).collect()));
    }
    // Q = H_0 H_1 ... applied to the identity, right to left.
    let mut q = DenseMatrix::identity(n);
    for (k, v) in reflectors.iter().rev() {
        for j in 0..n {
            let s: f64 = (*k..n).map(|i| v[i - k] * q.get(i, j)).sum();
            if s != 0.0 {
                for i in *k..n {
                    q.set(i, j, q.get(i, j) - s * v[i - k]);
                }
            }
        }
    }
    for k in 0..n.min(m) {
        if r.get(k, k) < 0.0 {
            for j in 0..m {
                r.set(k, j, -r.get(k, j));
            }
            for i in 0..n {
                q.set(i, k, -q.get(i, k));
            }
        }
    }
    (q, r)
}

/// Change of basis at one cluster: `[scaling | samplets] = inputs * q`.
#[derive(Debug, Clone)]
pub struct TwoScaleBlock {
    pub cluster: usize,
    /// `n_in x n_in` orthogonal matrix.
    pub q: DenseMatrix,
    pub n_scaling: usize,
    /// Moments of the inputs (children's scaling functions, or Diracs at
    /// leaves) about the cluster's box center.
    pub moments: MomentMatrix,
    /// Largest `p <= q` such that all samplets annihilate degree `<= p`
    /// numerically; `None` when the cluster has no samplets or not even
    /// constants vanish.
    pub achieved_order: Option<usize>,
    /// Global index of the first samplet.
    pub samplet_start: usize,
}

impl TwoScaleBlock {
    pub fn n_in(&self) -> usize {
        self.q.rows()
    }

    pub fn n_samplets(&self) -> usize {
        self.q.rows() - self.n_scaling
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisDiagnostics {
    pub n: usize,
    pub order: usize,
    pub depth: usize,
    pub root_scaling: usize,
    pub samplets_per_level: Vec<usize>,
    /// Clusters whose samplets certify fewer than `order` vanishing moments.
    pub degraded_clusters: usize,
    pub min_l1: f64,
    pub max_l1_ratio: f64,
}

/// Orthonormal samplet basis on the points of a cluster tree.
#[derive(Debug)]
pub struct SampletBasis {
    tree: ClusterTree,
    order: usize,
    alphas: Vec<Vec<u32>>,
    blocks: Vec<TwoScaleBlock>,
    /// Offset of each cluster's scaling functions in transform scratch space.
    scaling_offset: Vec<usize>,
    scaling_total: usize,
    levels: Vec<i32>,
    owner: Vec<usize>,
    omega: Vec<OnceLock<DenseMatrix>>,
}

impl SampletBasis {
    /// Builds the basis with `order = q + 1` vanishing moments.
    pub fn new(tree: ClusterTree, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("vanishing-moment order must be at least 1"));
        }
        let q = order - 1;
        let dim = tree.dim();
        let alphas = multi_indices(dim, q);
        let m_q = alphas.len();
        let nn = tree.len();

        // Bottom-up, one level at a time; clusters within a level are independent.
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); tree.depth() + 1];
        for (id, node) in tree.nodes().iter().enumerate() {
            by_level[node.level].push(id);
        }
        let mut built: Vec<Option<(DenseMatrix, usize, MomentMatrix, DenseMatrix)>> = vec![None; nn];
        for ids in by_level.iter().rev() {
            let results: Vec<_> = ids
                .par_iter()
                .map(|&id| {
                    let node = tree.node(id);
                    let center = node.bbox.center();
                    let moments = match node.children {
                        None => point_moments(tree.points(), node.range.clone(), &center, &alphas),
                        Some([l, r]) => {
                            let mut parts = Vec::new();
                            for c in [l, r] {
                                let (_, nphi, ref mm, ref sm) = *built[c].as_ref().unwrap();
                                let _ = mm;
                                let shift = shift_matrix(&alphas, &tree.node(c).bbox.center(), &center);
                                let shifted = shift.matmul(sm).unwrap();
                                debug_assert_eq!(shifted.cols(), nphi);
                                parts.push(shifted);
                            }
                            let cols = parts[0].cols() + parts[1].cols();
                            DenseMatrix::from_fn(m_q, cols, |a, j| {
                                if j < parts[0].cols() {
                                    parts[0].get(a, j)
                                } else {
                                    parts[1].get(a, j - parts[0].cols())
                                }
                            })
                        }
                    };
                    let n_in = moments.cols();
                    let (qm, r) = householder_qr(&moments.transpose());
                    let n_scaling = m_q.min(n_in);
                    // Scaling-function moments about this center: first columns of R^T.
                    let scaling_moments = DenseMatrix::from_fn(m_q, n_scaling, |a, k| r.get(k, a));
                    let mm = MomentMatrix {
                        cluster: id,
                        center,
                        values: moments,
                    };
                    (id, qm, n_scaling, mm, scaling_moments)
                })
                .collect();
            for (id, qm, ns, mm, sm) in results {
                built[id] = Some((qm, ns, mm, sm));
            }
        }

        let mut blocks = Vec::with_capacity(nn);
        let mut scaling_offset = Vec::with_capacity(nn);
        let mut scaling_total = 0;
        for (id, b) in built.into_iter().enumerate() {
            let (qm, n_scaling, moments, _) = b.unwrap();
            scaling_offset.push(scaling_total);
            scaling_total += n_scaling;
            let achieved_order = achieved_order(&moments.values, &qm, n_scaling, &alphas);
            blocks.push(TwoScaleBlock {
                cluster: id,
                q: qm,
                n_scaling,
                moments,
                achieved_order,
                samplet_start: 0,
            });
        }

        // Pre-order index assignment.
        let n = tree.points().len();
        let mut levels = vec![0i32; n];
        let mut owner = vec![0usize; n];
        let root_scaling = blocks[0].n_scaling;
        for g in 0..root_scaling {
            levels[g] = -1;
            owner[g] = 0;
        }
        let mut next = root_scaling;
        for id in 0..nn {
            blocks[id].samplet_start = next;
            let ns = blocks[id].n_samplets();
            for g in next..next + ns {
                levels[g] = tree.node(id).level as i32;
                owner[g] = id;
            }
            next += ns;
        }
        debug_assert_eq!(next, n);

        Ok(Self {
            omega: (0..nn).map(|_| OnceLock::new()).collect(),
            tree,
            order,
            alphas,
            blocks,
            scaling_offset,
            scaling_total,
            levels,
            owner,
        })
    }

    /// Builds the cluster tree (leaf size `2 m_q` unless given) and the basis.
    pub fn from_points(pc: &PointCloud, order: usize, leaf_size: Option<usize>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("vanishing-moment order must be at least 1"));
        }
        let leaf = leaf_size.unwrap_or(2 * moment_count(pc.dim(), order - 1));
        let tree = build_cluster_tree(pc, leaf)?;
        Self::new(tree, order)
    }

    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    /// Points in the basis' internal order.
    pub fn points(&self) -> &PointCloud {
        self.tree.points()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Number of vanishing moments, `q + 1`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn multi_indices(&self) -> &[Vec<u32>] {
        &self.alphas
    }

    pub fn blocks(&self) -> &[TwoScaleBlock] {
        &self.blocks
    }

    pub fn block(&self, cluster: usize) -> &TwoScaleBlock {
        &self.blocks[cluster]
    }

    pub fn root_scaling(&self) -> usize {
        self.blocks[0].n_scaling
    }

    /// Level of each global index; root scaling functions sit on level -1.
    pub fn levels(&self) -> &[i32] {
        &self.levels
    }

    /// Cluster owning each global index.
    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// Global indices of a cluster's samplets.
    pub fn samplet_range(&self, cluster: usize) -> Range<usize> {
        let b = &self.blocks[cluster];
        b.samplet_start..b.samplet_start + b.n_samplets()
    }

    /// Global indices generated at a cluster: its samplets, plus the scaling
    /// functions in front for the root.
    pub fn coef_range(&self, cluster: usize) -> Range<usize> {
        let r = self.samplet_range(cluster);
        if cluster == 0 {
            0..r.end
        } else {
            r
        }
    }

    /// Coefficient vectors of all functions generated at `cluster`, as a
    /// `|cluster| x n_in` matrix over the cluster's points (scaling columns
    /// first).
    pub fn omega(&self, cluster: usize) -> &DenseMatrix {
        self.omega[cluster].get_or_init(|| {
            let node = self.tree.node(cluster);
            let b = &self.blocks[cluster];
            match node.children {
                None => b.q.clone(),
                Some([l, r]) => {
                    let n_in = b.n_in();
                    let mut out = DenseMatrix::zeros(node.len(), n_in);
                    let mut row0 = 0;
                    let mut in0 = 0;
                    for c in [l, r] {
                        let oc = self.omega(c);
                        let nphi = self.blocks[c].n_scaling;
                        for i in 0..oc.rows() {
                            let orow = out.row_mut(row0 + i);
                            for k in 0..nphi {
                                let a = oc.get(i, k);
                                if a == 0.0 {
                                    continue;
                                }
                                let qrow = b.q.row(in0 + k);
                                for (o, qv) in orow.iter_mut().zip(qrow) {
                                    *o += a * qv;
                                }
                            }
                        }
                        row0 += oc.rows();
                        in0 += nphi;
                    }
                    out
                }
            }
        })
    }

    /// Coefficients of the samplets of `cluster` (or all coefficients
    /// generated at the root): `|cluster| x |coef_range|`.
    pub fn coefficient_block(&self, cluster: usize) -> DenseMatrix {
        let om = self.omega(cluster);
        let first = if cluster == 0 { 0 } else { self.blocks[cluster].n_scaling };
        DenseMatrix::from_fn(om.rows(), om.cols() - first, |i, k| om.get(i, first + k))
    }

    /// `T x` for a single vector in internal point order.
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        let mut out = vec![0.0; v.len()];
        self.forward_batch(v, 1, &mut out);
        Ok(out)
    }

    /// `T^T c`.
    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c.len())?;
        let mut out = vec![0.0; c.len()];
        self.inverse_batch(c, 1, &mut out);
        Ok(out)
    }

    /// Transforms every column of an `N x k` multivector.
    pub fn forward_columns(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_len(x.rows())?;
        let mut out = DenseMatrix::zeros(x.rows(), x.cols());
        self.forward_batch(x.as_slice(), x.cols(), out.as_mut_slice());
        Ok(out)
    }

    pub fn inverse_columns(&self, c: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_len(c.rows())?;
        let mut out = DenseMatrix::zeros(c.rows(), c.cols());
        self.inverse_batch(c.as_slice(), c.cols(), out.as_mut_slice());
        Ok(out)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::mismatch(format!("length {n} for a basis of size {}", self.len())));
        }
        Ok(())
    }

    /// Bottom-up cascade on `k` interleaved vectors (`x` is `N x k` row-major).
    pub(crate) fn forward_batch(&self, x: &[f64], k: usize, out: &mut [f64]) {
        let mut scratch = vec![0.0; self.scaling_total * k];
        let mut input = Vec::new();
        let mut y = Vec::new();
        for id in (0..self.blocks.len()).rev() {
            let node = self.tree.node(id);
            let b = &self.blocks[id];
            let n_in = b.n_in();
            input.clear();
            match node.children {
                None => input.extend_from_slice(&x[node.range.start * k..node.range.end * k]),
                Some([l, r]) => {
                    for c in [l, r] {
                        let o = self.scaling_offset[c] * k;
                        input.extend_from_slice(&scratch[o..o + self.blocks[c].n_scaling * k]);
                    }
                }
            }
            y.clear();
            y.resize(n_in * k, 0.0);
            // y = Q^T input
            for rr in 0..n_in {
                let qrow = b.q.row(rr);
                let irow = &input[rr * k..(rr + 1) * k];
                for (i, &qv) in qrow.iter().enumerate() {
                    if qv == 0.0 {
                        continue;
                    }
                    let yrow = &mut y[i * k..(i + 1) * k];
                    for (yv, iv) in yrow.iter_mut().zip(irow) {
                        *yv += qv * iv;
                    }
                }
            }
            let ns = b.n_scaling;
            let o = self.scaling_offset[id] * k;
            scratch[o..o + ns * k].copy_from_slice(&y[..ns * k]);
            let s = b.samplet_start * k;
            out[s..s + (n_in - ns) * k].copy_from_slice(&y[ns * k..]);
        }
        let ns = self.blocks[0].n_scaling;
        out[..ns * k].copy_from_slice(&scratch[..ns * k]);
    }

    /// Top-down cascade, inverse of [`Self::forward_batch`].
    pub(crate) fn inverse_batch(&self, c: &[f64], k: usize, out: &mut [f64]) {
        let mut scratch = vec![0.0; self.scaling_total * k];
        let ns0 = self.blocks[0].n_scaling;
        scratch[..ns0 * k].copy_from_slice(&c[..ns0 * k]);
        let mut input = Vec::new();
        let mut y = Vec::new();
        for id in 0..self.blocks.len() {
            let node = self.tree.node(id);
            let b = &self.blocks[id];
            let n_in = b.n_in();
            let ns = b.n_scaling;
            input.clear();
            let o = self.scaling_offset[id] * k;
            input.extend_from_slice(&scratch[o..o + ns * k]);
            let s = b.samplet_start * k;
            input.extend_from_slice(&c[s..s + (n_in - ns) * k]);
            y.clear();
            y.resize(n_in * k, 0.0);
            // y = Q input
            for rr in 0..n_in {
                let qrow = b.q.row(rr);
                let yrow = &mut y[rr * k..(rr + 1) * k];
                for (i, &qv) in qrow.iter().enumerate() {
                    if qv == 0.0 {
                        continue;
                    }
                    for (yv, iv) in yrow.iter_mut().zip(&input[i * k..(i + 1) * k]) {
                        *yv += qv * iv;
                    }
                }
            }
            match node.children {
                None => out[node.range.start * k..node.range.end * k].copy_from_slice(&y),
                Some([l, r]) => {
                    let mut at = 0;
                    for ch in [l, r] {
                        let len = self.blocks[ch].n_scaling * k;
                        let o = self.scaling_offset[ch] * k;
                        scratch[o..o + len].copy_from_slice(&y[at..at + len]);
                        at += len;
                    }
                }
            }
        }
    }

    /// Replaces every row `r` of `m` (row length `N`) by `T r`, i.e. computes
    /// `m T^T`.
    pub(crate) fn transform_rows(&self, m: &mut DenseMatrix) {
        let n = self.len();
        assert_eq!(m.cols(), n);
        m.as_mut_slice().par_chunks_mut(n * BATCH).for_each(|chunk| {
            let k = chunk.len() / n;
            let mut buf = vec![0.0; n * k];
            for r in 0..k {
                for p in 0..n {
                    buf[p * k + r] = chunk[r * n + p];
                }
            }
            let mut out = vec![0.0; n * k];
            self.forward_batch(&buf, k, &mut out);
            for r in 0..k {
                for p in 0..n {
                    chunk[r * n + p] = out[p * k + r];
                }
            }
        });
    }

    /// `T K T^T` for a symmetric `K` in internal point order. The result is
    /// exactly symmetric (upper triangle mirrored).
    pub fn transform_dense(&self, k: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.len();
        if k.rows() != n || k.cols() != n {
            return Err(Error::mismatch(format!(
                "{}x{} matrix for a basis of size {n}",
                k.rows(),
                k.cols()
            )));
        }
        let mut m = k.clone();
        self.transform_dense_in_place(&mut m);
        Ok(m)
    }

    /// In-place variant of [`Self::transform_dense`]; `m` must be symmetric.
    pub fn transform_dense_in_place(&self, m: &mut DenseMatrix) {
        self.transform_rows(m);
        transpose_square_in_place(m);
        self.transform_rows(m);
        let n = m.rows();
        let data = m.as_mut_slice();
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
    }

    /// `T_rows K T_cols^T` for a rectangular `K` (rows indexed by the points
    /// of `self`, columns by the points of `cols`).
    pub fn transform_dense_cross(&self, cols: &SampletBasis, k: &DenseMatrix) -> Result<DenseMatrix> {
        if k.rows() != self.len() || k.cols() != cols.len() {
            return Err(Error::mismatch(format!(
                "{}x{} matrix for bases of sizes {} and {}",
                k.rows(),
                k.cols(),
                self.len(),
                cols.len()
            )));
        }
        let mut m = k.clone();
        cols.transform_rows(&mut m);
        let mut t = m.transpose();
        drop(m);
        self.transform_rows(&mut t);
        Ok(t.transpose())
    }

    /// Explicit `N x N` transform matrix; row `g` holds the coefficients of
    /// basis function `g`. Intended for checks at small `N`.
    pub fn explicit_transform(&self) -> DenseMatrix {
        // Columns of T^T are inverse transforms of unit vectors.
        let n = self.len();
        let tt = self.inverse_columns(&DenseMatrix::identity(n)).unwrap();
        tt.transpose()
    }

    pub fn diagnostics(&self) -> BasisDiagnostics {
        let mut per_level = vec![0usize; self.tree.depth() + 1];
        let mut degraded = 0;
        let mut min_l1 = f64::INFINITY;
        let mut max_ratio: f64 = 0.0;
        for (id, b) in self.blocks.iter().enumerate() {
            let ns = b.n_samplets();
            per_level[self.tree.node(id).level] += ns;
            if ns > 0 && b.achieved_order.is_none_or(|p| p + 1 < self.order) {
                degraded += 1;
            }
            if ns > 0 {
                let om = self.omega(id);
                let bound = (om.rows() as f64).sqrt();
                for k in b.n_scaling..b.n_in() {
                    let l1: f64 = (0..om.rows()).map(|i| om.get(i, k).abs()).sum();
                    min_l1 = min_l1.min(l1);
                    max_ratio = max_ratio.max(l1 / bound);
                }
            }
        }
        BasisDiagnostics {
            n: self.len(),
            order: self.order,
            depth: self.tree.depth(),
            root_scaling: self.root_scaling(),
            samplets_per_level: per_level,
            degraded_clusters: degraded,
            min_l1: if min_l1.is_finite() { min_l1 } else { 0.0 },
            max_l1_ratio: max_ratio,
        }
    }
}

fn achieved_order(moments: &DenseMatrix, q: &DenseMatrix, n_scaling: usize, alphas: &[Vec<u32>]) -> Option<usize> {
    let n_in = q.rows();
    if n_in == n_scaling {
        return None;
    }
    let mut scale: f64 = 0.0;
    for a in 0..moments.rows() {
        let row_norm: f64 = moments.row(a).iter().map(|x| x * x).sum::<f64>().sqrt();
        scale = scale.max(row_norm);
    }
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut best: Option<usize> = None;
    let max_deg = alphas.iter().map(|a| a.iter().sum::<u32>()).max().unwrap_or(0) as usize;
    for deg in 0..=max_deg {
        let ok = alphas.iter().enumerate().filter(|(_, a)| a.iter().sum::<u32>() as usize == deg).all(|(row, _)| {
            (n_scaling..n_in).all(|k| {
                let m: f64 = (0..n_in).map(|i| moments.get(row, i) * q.get(i, k)).sum();
                m.abs() <= tol
            })
        });
        if !ok {
            break;
        }
        best = Some(deg);
    }
    best
}

fn transpose_square_in_place(m: &mut DenseMatrix) {
    let n = m.rows();
    debug_assert_eq!(n, m.cols());
    let data = m.as_mut_slice();
    const B: usize = 64;
    for ib in (0..n).step_by(B) {
        for jb in (ib..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                let j0 = if ib == jb { i + 1 } else { jb };
                for j in j0..(jb + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(n: usize, d: usize, order: usize, seed: u64) -> SampletBasis {
        let pc = PointCloud::random_uniform(n, d, seed).unwrap();
        SampletBasis::from_points(&pc, order, None).unwrap()
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(moment_count(2, 3), 10);
        assert_eq!(moment_count(3, 3), 20);
        assert_eq!(multi_indices(3, 2).len(), moment_count(3, 2));
        assert_eq!(multi_indices(1, 0), vec![vec![0]]);
        assert_eq!(multi_indices(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn qr_sign_and_orthogonality() {
        let a = DenseMatrix::random_uniform(7, 3, 2);
        let (q, r) = householder_qr(&a);
        let qtq = q.transpose().matmul(&q).unwrap();
        assert!(qtq.sub(&DenseMatrix::identity(7)).unwrap().frobenius_norm() < 1e-14);
        assert!(q.matmul(&r).unwrap().sub(&a).unwrap().max_abs() < 1e-14);
        for k in 0..3 {
            assert!(r.get(k, k) >= 0.0);
        }
    }

    #[test]
    fn leaf_moments_trivial() {
        let pc = PointCloud::new(2, vec![0.5, 0.5]).unwrap();
        let m = point_moments(&pc, 0..1, &[0.5, 0.5], &multi_indices(2, 2));
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let pc = PointCloud::random_uniform(5, 2, 1).unwrap();
        let m = point_moments(&pc, 0..5, &[0.3, 0.3], &multi_indices(2, 0));
        assert_eq!(m.as_slice(), &[1.0; 5]);
    }

    #[test]
    fn small_cloud_is_all_scaling() {
        let b = basis(6, 2, 4, 1);
        assert_eq!(b.root_scaling(), 6);
        assert!(b.levels().iter().all(|&l| l == -1));
    }

    #[test]
    fn roundtrip_and_zero() {
        let b = basis(700, 2, 3, 4);
        let v: Vec<f64> = crate::rng::uniform_cube(700, 1, 9);
        let c = b.forward(&v).unwrap();
        let back = b.inverse(&c).unwrap();
        let err: f64 = v.iter().zip(&back).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-12 * 700f64.sqrt());
        assert!(b.forward(&vec![0.0; 700]).unwrap().iter().all(|&x| x == 0.0));
        assert!(b.forward(&[1.0]).is_err());
    }

    #[test]
    fn polynomial_samples_have_no_samplet_coefficients() {
        for (d, order) in [(1, 4), (2, 4), (3, 3), (2, 1)] {
            let b = basis(600, d, order, 17);
            for alpha in multi_indices(d, order - 1) {
                let v: Vec<f64> = (0..b.len())
                    .map(|i| {
                        let x = b.points().point(i);
                        alpha.iter().enumerate().map(|(k, &e)| x[k].powi(e as i32)).product()
                    })
                    .collect();
                let c = b.forward(&v).unwrap();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for &ci in &c[b.root_scaling()..] {
                    assert!(ci.abs() <= 1e-10 * norm, "d={d} alpha={alpha:?} {ci}");
                }
            }
        }
    }

    #[test]
    fn internal_moments_match_direct_recomputation() {
        let b = basis(256, 2, 4, 3);
        for (id, node) in b.tree().nodes().iter().enumerate() {
            let blk = b.block(id);
            let center = node.bbox.center();
            let raw = point_moments(b.points(), node.range.clone(), &center, b.multi_indices());
            let phi = b.omega(id);
            // moments of generated functions = raw * omega; compare with M Q
            let direct = raw.matmul(phi).unwrap();
            let via = blk.moments.values.matmul(&blk.q).unwrap();
            assert!(direct.sub(&via).unwrap().max_abs() < 1e-12, "cluster {id}");
        }
    }

    #[test]
    fn explicit_matches_fast_and_is_orthogonal() {
        let b = basis(300, 3, 3, 5);
        let t = b.explicit_transform();
        let ttt = t.matmul(&t.transpose()).unwrap();
        assert!(ttt.sub(&DenseMatrix::identity(300)).unwrap().frobenius_norm() <= 1e-10 * 300f64.sqrt());
        let v = crate::rng::uniform_cube(300, 1, 2);
        let fast = b.forward(&v).unwrap();
        let slow = t.matmul(&DenseMatrix::column(v)).unwrap();
        for (a, s) in fast.iter().zip(slow.as_slice()) {
            assert!((a - s).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_norm_bounded_by_root_cluster_size() {
        for (d, order, seed) in [(1, 1, 1), (2, 1, 2), (2, 2, 3), (3, 3, 4), (2, 4, 5), (1, 4, 6)] {
            let b = basis(700, d, order, seed);
            for (id, blk) in b.blocks().iter().enumerate() {
                let om = b.omega(id);
                let n = om.rows() as f64;
                for k in blk.n_scaling..blk.n_in() {
                    let abs: Vec<f64> = (0..om.rows()).map(|r| om.get(r, k).abs()).collect();
                    let l1: f64 = abs.iter().sum();
                    let (lo, hi) = abs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                    if hi <= lo * (1.0 + 1e-12) {
                        // Equality case of Cauchy-Schwarz: all entries are +-1/sqrt(n).
                        assert!((l1 - n.sqrt()).abs() <= 4.0 * n * f64::EPSILON * n.sqrt(), "cluster {id}: {l1}");
                    } else {
                        assert!(l1 <= n.sqrt(), "cluster {id}: {l1} > {}", n.sqrt());
                    }
                }
            }
        }
    }

    #[test]
    fn samplets_are_localized() {
        let b = basis(400, 2, 2, 8);
        for g in [b.root_scaling(), 57, 211, 399] {
            let mut c = vec![0.0; 400];
            c[g] = 1.0;
            let v = b.inverse(&c).unwrap();
            let range = b.tree().node(b.owner()[g]).range.clone();
            for (i, x) in v.iter().enumerate() {
                if !range.contains(&i) {
                    assert_eq!(*x, 0.0);
                }
            }
        }
    }

    #[test]
    fn samplets_per_level_double() {
        let b = basis(1024, 2, 4, 21);
        let counts = b.diagnostics().samplets_per_level;
        for j in 1..counts.len() - 1 {
            let ratio = counts[j + 1] as f64 / counts[j] as f64;
            assert!((1.0..=4.0).contains(&ratio), "{counts:?}");
        }
    }

    #[test]
    fn dense_transform_properties() {
        let b = basis(200, 2, 3, 6);
        let id = b.transform_dense(&DenseMatrix::identity(200)).unwrap();
        assert!(id.sub(&DenseMatrix::identity(200)).unwrap().max_abs() < 1e-13);
        let k = crate::kernels::assemble_dense(&crate::kernels::KernelSpec::exponential(0.5, 1.0).unwrap(), b.points()).unwrap();
        let ks = b.transform_dense(&k).unwrap();
        assert!((ks.frobenius_norm() - k.frobenius_norm()).abs() <= 1e-10 * k.frobenius_norm());
        let t = b.explicit_transform();
        let slow = t.matmul(&k).unwrap().matmul(&t.transpose()).unwrap();
        assert!(ks.sub(&slow).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn cross_transform_matches_explicit() {
        let bz = basis(90, 2, 3, 1);
        let bx = basis(150, 2, 4, 2);
        let k = crate::kernels::assemble_dense_cross(
            &crate::kernels::KernelSpec::exponential(1.0, 1.0).unwrap(),
            bz.points(),
            bx.points(),
        )
        .unwrap();
        let fast = bz.transform_dense_cross(&bx, &k).unwrap();
        let slow = bz
            .explicit_transform()
            .matmul(&k)
            .unwrap()
            .matmul(&bx.explicit_transform().transpose())
            .unwrap();
        assert!(fast.sub(&slow).unwrap().max_abs() < 1e-13);
    }
}
