//! Gaussian-process posterior mean and pointwise variance with compressed
//! training and cross-covariance matrices.

use std::sync::Arc;

use rayon::prelude::*;

use crate::compression::{
    apply_threshold, assemble_compressed_direct, assemble_cross_direct, build_cross_pattern, build_pattern,
    SCompressedMatrix, DEFAULT_ETA, DEFAULT_TAU_TIMES_N,
};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::kernels::KernelSpec;
use crate::rng::SplitMix64;
use crate::samplets::SampletBasis;
use crate::selinv::{ldlt_factorize, LdltFactor, OrderingMethod};

/// Vanishing-moment order on the training sites.
pub const DEFAULT_X_ORDER: usize = 4;
/// Vanishing-moment order on the evaluation sites.
pub const DEFAULT_Z_ORDER: usize = 3;
/// `tau * N` for the cross matrix.
pub const DEFAULT_CROSS_TAU_TIMES_N: f64 = 1e-4;
/// Relative size of negative variances that are rounded to zero.
pub const VARIANCE_CLAMP: f64 = 1e-10;
const VARIANCE_BATCH: usize = 64;

#[derive(Debug, Clone)]
pub struct GpConfig {
    pub eta: f64,
    pub x_order: usize,
    pub z_order: usize,
    /// Threshold for the training matrix; `None` means `1e-5 / N`.
    pub tau_xx: Option<f64>,
    /// Threshold for the cross matrix; `None` means `1e-4 / N`.
    pub tau_zx: Option<f64>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            x_order: DEFAULT_X_ORDER,
            z_order: DEFAULT_Z_ORDER,
            tau_xx: None,
            tau_zx: None,
        }
    }
}

/// Conditioned model: compressed `K_XX + mu I` and its factorization.
#[derive(Debug)]
pub struct GpModel {
    spec: KernelSpec,
    mu: f64,
    config: GpConfig,
    x_basis: Arc<SampletBasis>,
    k_xx: SCompressedMatrix,
    factor: LdltFactor,
}

impl GpModel {
    pub fn fit(x: &PointCloud, spec: KernelSpec, mu: f64, config: GpConfig) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::invalid("the noise variance mu must be positive"));
        }
        let basis = Arc::new(SampletBasis::from_points(x, config.x_order, None)?);
        let pattern = Arc::new(build_pattern(&basis, config.eta)?);
        let (k, _) = assemble_compressed_direct(&basis, &spec, &pattern)?;
        let n = x.len() as f64;
        let (k, _) = apply_threshold(&k, config.tau_xx.unwrap_or(DEFAULT_TAU_TIMES_N / n))?;
        let factor = ldlt_factorize(&k, mu, OrderingMethod::Auto)?;
        Ok(Self {
            spec,
            mu,
            config,
            x_basis: basis,
            k_xx: k,
            factor,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn x_basis(&self) -> &Arc<SampletBasis> {
        &self.x_basis
    }

    pub fn k_xx(&self) -> &SCompressedMatrix {
        &self.k_xx
    }

    pub fn factor(&self) -> &LdltFactor {
        &self.factor
    }

    /// Basis on the evaluation sites with the configured order.
    pub fn z_basis(&self, z: &PointCloud) -> Result<Arc<SampletBasis>> {
        if z.dim() != self.x_basis.points().dim() {
            return Err(Error::mismatch("evaluation sites have a different dimension"));
        }
        Ok(Arc::new(SampletBasis::from_points(z, self.config.z_order, None)?))
    }

    /// `K_ZX` in two-sided samplet coordinates.
    pub fn compress_cross(&self, z_basis: &Arc<SampletBasis>) -> Result<SCompressedMatrix> {
        compress_cross(&self.spec, z_basis, &self.x_basis, self.config.eta, self.config.tau_zx)
    }

    /// `K_ZX (K_XX + mu I)^{-1} y` with `y` and the result in input order.
    pub fn posterior_mean(&self, y: &[f64], k_zx: &SCompressedMatrix) -> Result<Vec<f64>> {
        let n = self.x_basis.len();
        if y.len() != n {
            return Err(Error::mismatch(format!("{} labels for {n} training sites", y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("labels must be finite"));
        }
        let z_basis = self.check_cross(k_zx)?;
        let y_sigma = self.x_basis.forward(&self.x_basis.points().from_input_order(y))?;
        let alpha = self.factor.solve(&DenseMatrix::column(y_sigma))?;
        let mean_sigma = k_zx.apply(&alpha)?;
        let mean = z_basis.inverse(mean_sigma.as_slice())?;
        Ok(z_basis.points().to_input_order(&mean))
    }

    /// `k(z_i, z_i) - r_i^T (K_XX + mu I)^{-1} r_i` for every evaluation site,
    /// where `r_i` holds the kernel between `z_i` and the training sites in
    /// samplet coordinates. `z_diag` (input order) defaults to `k(0)`.
    /// Negatives down to `-1e-10 * scale` are rounded to zero.
    pub fn posterior_variance_diag(&self, z: &PointCloud, z_diag: Option<&[f64]>) -> Result<Vec<f64>> {
        if z.dim() != self.x_basis.points().dim() {
            return Err(Error::mismatch("evaluation sites have a different dimension"));
        }
        if let Some(d) = z_diag {
            if d.len() != z.len() {
                return Err(Error::mismatch("prior variances do not match the evaluation sites"));
            }
        }
        let xs = self.x_basis.points();
        let n = xs.len();
        let batches: Vec<usize> = (0..z.len()).step_by(VARIANCE_BATCH).collect();
        let parts: Vec<Vec<f64>> = batches
            .par_iter()
            .map(|&start| -> Result<Vec<f64>> {
                let end = (start + VARIANCE_BATCH).min(z.len());
                let b = end - start;
                let rows = DenseMatrix::from_fn(n, b, |p, i| self.spec.eval_points(xs.point(p), z.point(start + i)));
                let r = self.x_basis.forward_columns(&rows)?;
                let s = self.factor.solve(&r)?;
                let mut out = vec![0.0; b];
                for p in 0..n {
                    for (o, (x, y)) in out.iter_mut().zip(r.row(p).iter().zip(s.row(p))) {
                        *o += x * y;
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let tol = VARIANCE_CLAMP * self.spec.scale;
        let mut var = Vec::with_capacity(z.len());
        for (i, q) in parts.concat().into_iter().enumerate() {
            let prior = z_diag.map_or(self.spec.eval(0.0), |d| d[i]);
            let v = prior - q;
            if v < -tol {
                return Err(Error::Numeric(format!(
                    "posterior variance {v:e} at evaluation site {i} is negative beyond rounding"
                )));
            }
            var.push(v.max(0.0));
        }
        Ok(var)
    }

    fn check_cross<'a>(&self, k_zx: &'a SCompressedMatrix) -> Result<&'a Arc<SampletBasis>> {
        let (Some(rows), Some(cols)) = (k_zx.row_basis(), k_zx.col_basis()) else {
            return Err(Error::invalid("cross matrix must carry both samplet bases"));
        };
        if !Arc::ptr_eq(cols, &self.x_basis) {
            return Err(Error::mismatch("cross matrix was built for other training sites"));
        }
        Ok(rows)
    }
}

/// `K_ZX` in two-sided samplet coordinates on the dual-tree pattern,
/// thresholded at `tau` (default `1e-4 / N`).
pub fn compress_cross(
    spec: &KernelSpec,
    z_basis: &Arc<SampletBasis>,
    x_basis: &Arc<SampletBasis>,
    eta: f64,
    tau: Option<f64>,
) -> Result<SCompressedMatrix> {
    let pattern = Arc::new(build_cross_pattern(z_basis, x_basis, eta)?);
    let (k, _) = assemble_cross_direct(z_basis, x_basis, spec, &pattern)?;
    let tau = tau.unwrap_or(DEFAULT_CROSS_TAU_TIMES_N / x_basis.len() as f64);
    Ok(apply_threshold(&k, tau)?.0)
}

/// Labeled sites for implicit-surface learning: the surface with value 0,
/// points on a sphere around the centroid inside the surface with value -1
/// and points on an enclosing box with value +1.
#[derive(Debug, Clone)]
pub struct SurfaceConstraints {
    pub points: PointCloud,
    pub labels: Vec<f64>,
}

pub fn make_constraints(surface: &PointCloud, n_inner: usize, n_box: usize, seed: u64) -> Result<SurfaceConstraints> {
    let d = surface.dim();
    if surface.is_empty() {
        return Err(Error::NoPoints);
    }
    let n = surface.len();
    let centroid: Vec<f64> = (0..d)
        .map(|k| (0..n).map(|i| surface.point(i)[k]).sum::<f64>() / n as f64)
        .collect();
    let nearest = (0..n)
        .map(|i| crate::geometry::dist(surface.point(i), &centroid))
        .fold(f64::INFINITY, f64::min);
    if !(nearest > 0.0) {
        return Err(Error::invalid("the surface passes through its centroid"));
    }
    let radius = 0.5 * nearest;
    let bbox = surface.bounding_box();
    let margin: Vec<f64> = (0..d).map(|k| 0.1 * (bbox.hi[k] - bbox.lo[k]).max(radius)).collect();
    let lo: Vec<f64> = (0..d).map(|k| bbox.lo[k] - margin[k]).collect();
    let hi: Vec<f64> = (0..d).map(|k| bbox.hi[k] + margin[k]).collect();

    let mut rng = SplitMix64::new(seed);
    let mut coords = Vec::with_capacity((n + n_inner + n_box) * d);
    let mut labels = Vec::with_capacity(n + n_inner + n_box);
    for i in 0..n {
        coords.extend_from_slice(surface.point(i));
        labels.push(0.0);
    }
    for i in 0..n_inner {
        let dir = sphere_direction(d, i, n_inner, &mut rng);
        coords.extend(dir.iter().zip(&centroid).map(|(u, c)| c + radius * u));
        labels.push(-1.0);
    }
    // Faces are drawn with probability proportional to their measure.
    let extent: Vec<f64> = (0..d).map(|k| hi[k] - lo[k]).collect();
    let face: Vec<f64> = (0..d)
        .map(|k| (0..d).filter(|&j| j != k).map(|j| extent[j]).product())
        .collect();
    let total: f64 = face.iter().sum();
    for _ in 0..n_box {
        let mut p: Vec<f64> = (0..d).map(|k| rng.uniform(lo[k], hi[k])).collect();
        let mut u = rng.next_f64() * total;
        let mut axis = d - 1;
        for (k, f) in face.iter().enumerate() {
            if u < *f {
                axis = k;
                break;
            }
            u -= f;
        }
        p[axis] = if rng.next_f64() < 0.5 { lo[axis] } else { hi[axis] };
        coords.extend(p);
        labels.push(1.0);
    }
    Ok(SurfaceConstraints {
        points: PointCloud::new(d, coords)?,
        labels,
    })
}

/// `n` points on the sphere of radius `radius` about the origin, laid out
/// as in [`make_constraints`]; a synthetic surface for demos.
pub fn sphere_cloud(n: usize, dim: usize, radius: f64, seed: u64) -> Result<PointCloud> {
    if dim < 2 {
        return Err(Error::invalid("a sphere needs dimension at least 2"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let mut rng = SplitMix64::new(seed);
    let coords = (0..n)
        .flat_map(|i| sphere_direction(dim, i, n, &mut rng).into_iter().map(|u| radius * u).collect::<Vec<_>>())
        .collect();
    PointCloud::new(dim, coords)
}

/// Unit vectors: a Fibonacci lattice in 3D, equal angles in 2D, random
/// Gaussian directions otherwise.
fn sphere_direction(d: usize, i: usize, count: usize, rng: &mut SplitMix64) -> Vec<f64> {
    match d {
        1 => vec![if i.is_multiple_of(2) { -1.0 } else { 1.0 }],
        2 => {
            let t = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            vec![t.cos(), t.sin()]
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            vec![r * t.cos(), r * t.sin(), z]
        }
        _ => loop {
            let v: Vec<f64> = (0..d)
                .map(|_| {
                    let (u1, u2) = (rng.next_f64().max(f64::MIN_POSITIVE), rng.next_f64());
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        },
    }
}

#[cfg(test)]
mod tests;
