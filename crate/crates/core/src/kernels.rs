//! Matérn kernels of half-integer order and the Gaussian kernel, plus dense
//! kernel-matrix assembly (the reference path).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::geometry::{dist, PointCloud};

/// Default limit on `N` for dense `N x N` assembly.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Matérn with smoothness `p + 1/2`; `p = 0` is the exponential kernel.
    Matern { p: u32 },
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub length_scale: f64,
    /// Global prefactor; the benchmarks use `1/N`.
    pub scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, length_scale: f64, scale: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::invalid(format!("length scale must be positive, got {length_scale}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            family,
            length_scale,
            scale,
        })
    }

    /// `scale * exp(-r/ell)`.
    pub fn exponential(length_scale: f64, scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern { p: 0 }, length_scale, scale)
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        kernel_eval(self, r)
    }

    /// Kernel between two points.
    #[inline]
    pub fn eval_points(&self, x: &[f64], y: &[f64]) -> f64 {
        kernel_eval(self, dist(x, y))
    }
}

/// `scale * kappa(r)`.
///
/// For `nu = p + 1/2` the closed form is
/// `exp(-sqrt(2nu) r/ell) * p!/(2p)! * sum_{k=0}^p (p+k)!/(k!(p-k)!) (sqrt(8nu) r/ell)^(p-k)`.
pub fn kernel_eval(spec: &KernelSpec, r: f64) -> f64 {
    let ell = spec.length_scale;
    match spec.family {
        KernelFamily::Gaussian => spec.scale * (-r * r / (2.0 * ell * ell)).exp(),
        KernelFamily::Matern { p: 0 } => spec.scale * (-r / ell).exp(),
        KernelFamily::Matern { p } => {
            let p = p as i32;
            let nu2 = (2 * p + 1) as f64;
            let s = nu2.sqrt() * r / ell;
            // sqrt(8 nu) r / ell = 2 s
            let z = 2.0 * s;
            // Horner in z over the coefficients c_k = p!/(2p)! (p+k)!/(k!(p-k)!),
            // attached to z^(p-k).
            let mut poly = 0.0;
            for k in 0..=p {
                poly = poly * z + matern_coefficient(p, k);
            }
            spec.scale * (-s).exp() * poly
        }
    }
}

fn matern_coefficient(p: i32, k: i32) -> f64 {
    // p!/(2p)! * (p+k)!/(k!(p-k)!) evaluated as a product of ratios
    let mut c = 1.0;
    for i in 1..=p {
        c *= i as f64;
    }
    for i in 1..=2 * p {
        c /= i as f64;
    }
    for i in 1..=(p + k) {
        c *= i as f64;
    }
    for i in 1..=k {
        c /= i as f64;
    }
    for i in 1..=(p - k) {
        c /= i as f64;
    }
    c
}

/// Dense kernel matrix between two clouds (rows: `rows`, columns: `cols`).
pub fn assemble_dense_cross(spec: &KernelSpec, rows: &PointCloud, cols: &PointCloud) -> Result<DenseMatrix> {
    assemble_dense_cross_capped(spec, rows, cols, DEFAULT_DENSE_CAP)
}

pub fn assemble_dense_cross_capped(
    spec: &KernelSpec,
    rows: &PointCloud,
    cols: &PointCloud,
    cap: usize,
) -> Result<DenseMatrix> {
    if rows.dim() != cols.dim() {
        return Err(Error::mismatch("point clouds of different dimension"));
    }
    let (m, n) = (rows.len(), cols.len());
    if m.max(n) > cap {
        return Err(Error::SizeCap { n: m.max(n), cap });
    }
    let mut data = vec![0.0; m * n];
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        let x = rows.point(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = spec.eval_points(x, cols.point(j));
        }
    });
    DenseMatrix::from_vec(m, n, data)
}

/// Symmetric kernel matrix of `pc` in the cloud's own order; each unordered
/// pair is evaluated once.
pub fn assemble_dense(spec: &KernelSpec, pc: &PointCloud) -> Result<DenseMatrix> {
    assemble_dense_capped(spec, pc, DEFAULT_DENSE_CAP)
}

pub fn assemble_dense_capped(spec: &KernelSpec, pc: &PointCloud, cap: usize) -> Result<DenseMatrix> {
    let n = pc.len();
    if n > cap {
        return Err(Error::SizeCap { n, cap });
    }
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = pc.point(i);
        for (j, v) in row.iter_mut().enumerate().skip(i) {
            *v = spec.eval_points(x, pc.point(j));
        }
    });
    for i in 0..n {
        for j in 0..i {
            data[i * n + j] = data[j * n + i];
        }
    }
    DenseMatrix::from_vec(n, n, data)
}
