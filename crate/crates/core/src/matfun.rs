//! Matrix functions of compressed kernel matrices: the inverse square root
//! by an elliptic-function quadrature of shifted selected inverses, the
//! square root derived from it, and the exponential by a truncated series.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::algebra::{formatted_axpby, LinearOperator, PatternedProductPlan};
use crate::compression::{SCompressedMatrix, SparsityPattern};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::selinv::{fill_reducing_ordering, ldlt_factorize, LdltFactor, OrderingMethod, SymbolicFactor};

/// Power iterations used for the largest eigenvalue by default.
pub const DEFAULT_POWER_ITERS: usize = 50;
/// Safety margin applied to estimated spectral bounds.
const BOUND_INFLATION: f64 = 0.01;

/// Complete elliptic integrals `(K(m), E(m))` of parameter `m`, by the
/// arithmetic-geometric mean.
pub fn elliptic_ke(m: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::invalid(format!("elliptic parameter {m} outside [0, 1]")));
    }
    if m == 1.0 {
        return Ok((f64::INFINITY, 1.0));
    }
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    let mut c = m.sqrt();
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..64 {
        if c.abs() <= f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        c = 0.5 * (a - b);
        b = (a * b).sqrt();
        a = an;
        pow *= 2.0;
        sum += pow * c * c;
    }
    let k = PI / (2.0 * a);
    Ok((k, k * (1.0 - sum)))
}

pub fn elliptic_k(m: f64) -> Result<f64> {
    Ok(elliptic_ke(m)?.0)
}

pub fn elliptic_e(m: f64) -> Result<f64> {
    Ok(elliptic_ke(m)?.1)
}

/// Jacobi elliptic functions `(sn, cn, dn)` of argument `u` and parameter
/// `m`, by the descending Landen transformation.
pub fn jacobi_elliptic(u: f64, m: f64) -> Result<(f64, f64, f64)> {
    if !u.is_finite() {
        return Err(Error::invalid("argument must be finite"));
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::invalid(format!("elliptic parameter {m} outside [0, 1]")));
    }
    if m == 0.0 {
        return Ok((u.sin(), u.cos(), 1.0));
    }
    if m == 1.0 {
        let sech = 1.0 / u.cosh();
        return Ok((u.tanh(), sech, sech));
    }
    let mut a = vec![1.0f64];
    let mut c = vec![m.sqrt()];
    let mut b = (1.0 - m).sqrt();
    while c.last().unwrap().abs() > f64::EPSILON * a.last().unwrap() && a.len() < 64 {
        let (an, bn) = (*a.last().unwrap(), b);
        a.push(0.5 * (an + bn));
        c.push(0.5 * (an - bn));
        b = (an * bn).sqrt();
    }
    let n = a.len() - 1;
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    // dn^2 = 1 - m sn^2 written without cancellation.
    let dn = ((1.0 - m) + m * cn * cn).sqrt();
    Ok((sn, cn, dn))
}

/// Nodes and weights of the quadrature
/// `A^{-1/2} ~ sum_k weight_k (A + shift_k I)^{-1}` for spectra in
/// `[c_lower, c_upper]`. Nodes sit at the midpoints of `K_quad` equal steps
/// over the quarter period `K(1 - c_lower / c_upper)`.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticQuadrature {
    pub k_quad: usize,
    pub c_lower: f64,
    pub c_upper: f64,
    pub shifts: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EllipticQuadrature {
    pub fn new(k_quad: usize, c_lower: f64, c_upper: f64) -> Result<Self> {
        if k_quad == 0 {
            return Err(Error::invalid("need at least one quadrature point"));
        }
        if !(c_lower > 0.0 && c_lower <= c_upper && c_upper.is_finite()) {
            return Err(Error::invalid(format!("bounds ({c_lower}, {c_upper}) must satisfy 0 < lower <= upper")));
        }
        let m = 1.0 - c_lower / c_upper;
        let quarter = elliptic_k(m)?;
        let pre = 2.0 * quarter * c_lower.sqrt() / (PI * k_quad as f64);
        let mut shifts = Vec::with_capacity(k_quad);
        let mut weights = Vec::with_capacity(k_quad);
        for k in 0..k_quad {
            let t = quarter * (k as f64 + 0.5) / k_quad as f64;
            let (sn, cn, dn) = jacobi_elliptic(t, m)?;
            shifts.push(c_lower * (sn / cn).powi(2));
            weights.push(pre * dn / (cn * cn));
        }
        Ok(Self {
            k_quad,
            c_lower,
            c_upper,
            shifts,
            weights,
        })
    }

    /// The quadrature applied to a positive scalar.
    pub fn apply_scalar(&self, a: f64) -> f64 {
        self.shifts.iter().zip(&self.weights).map(|(s, w)| w / (a + s)).sum()
    }
}

/// `(A + mu I)^{-1/2}` on `target`: one symbolic analysis, then a selected
/// inverse of `A + (mu + w_k^2) I` per node, accumulated in node order.
/// `bounds` enclose the spectrum of `A + mu I`.
pub fn inv_sqrt(
    a: &SCompressedMatrix,
    mu: f64,
    k_quad: usize,
    bounds: (f64, f64),
    target: &Arc<SparsityPattern>,
) -> Result<SCompressedMatrix> {
    let quad = EllipticQuadrature::new(k_quad, bounds.0, bounds.1)?;
    let perm = fill_reducing_ordering(a.pattern(), OrderingMethod::Auto, a.row_basis().map(|b| b.as_ref()))?;
    let symbolic = Arc::new(SymbolicFactor::analyze(a.pattern(), perm)?);
    let mut acc = vec![0.0; target.nnz()];
    for (shift, weight) in quad.shifts.iter().zip(&quad.weights) {
        let factor = LdltFactor::factorize(&symbolic, a, mu + shift)?;
        let z = factor.selected_inverse(target)?;
        for (s, v) in acc.iter_mut().zip(z.values()) {
            *s += weight * v;
        }
    }
    SCompressedMatrix::new(target.clone(), acc)?.with_bases(a.row_basis().cloned(), a.col_basis().cloned())
}

/// `(A + mu I) S_inv` on `target`.
pub fn sqrt_from_inv_sqrt(
    a: &SCompressedMatrix,
    mu: f64,
    s_inv: &SCompressedMatrix,
    target: &Arc<SparsityPattern>,
) -> Result<SCompressedMatrix> {
    a.check_compatible(s_inv)?;
    let shifted = a.shifted(mu)?;
    PatternedProductPlan::new(shifted.pattern().clone(), s_inv.pattern().clone(), target.clone())?.execute(&shifted, s_inv)
}

/// `sum_{k < terms} A^k / k!` on `target` by Horner's scheme,
/// `I + A (I + A/2 (I + ...))`, with every product formatted on `target`.
pub fn exp_series(a: &SCompressedMatrix, terms: usize, target: &Arc<SparsityPattern>) -> Result<SCompressedMatrix> {
    if terms == 0 {
        return Err(Error::invalid("the series needs at least one term"));
    }
    if a.nrows() != a.ncols() {
        return Err(Error::mismatch("exponential of a non-square matrix"));
    }
    if !target.has_full_diagonal() {
        return Err(Error::invalid("target pattern must contain the diagonal"));
    }
    let mut identity = SCompressedMatrix::zeros(target.clone());
    for i in 0..target.nrows() {
        let p = target.find(i, i).unwrap();
        identity.values_mut()[p] = 1.0;
    }
    let identity = identity.with_bases(a.row_basis().cloned(), a.col_basis().cloned())?;
    let mut p = identity.clone();
    if terms > 1 {
        let plan = PatternedProductPlan::new(a.pattern().clone(), target.clone(), target.clone())?;
        for k in (1..terms).rev() {
            let ap = plan.execute(a, &p)?;
            p = formatted_axpby(1.0, &identity, 1.0 / k as f64, &ap, target)?;
        }
    }
    Ok(p)
}

/// Truncated exponential series applied implicitly: `X -> sum_{k<terms} A^k X / k!`.
pub struct SeriesExp<'a> {
    pub op: &'a dyn LinearOperator,
    pub terms: usize,
}

impl LinearOperator for SeriesExp<'_> {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }

    fn ncols(&self) -> usize {
        self.op.ncols()
    }

    fn apply_to(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = x.clone();
        for k in (1..self.terms.max(1)).rev() {
            let ay = self.op.apply_to(&y)?;
            for (v, (&xv, &av)) in y.as_mut_slice().iter_mut().zip(x.as_slice().iter().zip(ay.as_slice())) {
                *v = xv + av / k as f64;
            }
        }
        Ok(y)
    }
}

/// Spectral enclosure `(lower, upper)` of a symmetric matrix. The upper end
/// comes from power iteration with a Rayleigh quotient; the lower end is
/// `lower` when given, else inverse iteration with an `LDL^T` factor. Both
/// are widened by one percent.
pub fn spectral_bounds(a: &SCompressedMatrix, iters: usize, seed: u64, lower: Option<f64>) -> Result<(f64, f64)> {
    if a.nrows() != a.ncols() {
        return Err(Error::mismatch("spectral bounds of a non-square matrix"));
    }
    let n = a.nrows();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let start = || {
        let mut rng = SplitMix64::new(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        DenseMatrix::column(v)
    };
    let upper = rayleigh_iteration(start(), iters, |v| a.apply(v))?;
    let lower = match lower {
        Some(l) => l,
        None => {
            let f = ldlt_factorize(a, 0.0, OrderingMethod::Auto)?;
            let inv = rayleigh_iteration(start(), iters, |v| f.solve(v))?;
            (1.0 - BOUND_INFLATION) / inv
        }
    };
    Ok((lower, upper * (1.0 + BOUND_INFLATION)))
}

fn rayleigh_iteration(mut v: DenseMatrix, iters: usize, op: impl Fn(&DenseMatrix) -> Result<DenseMatrix>) -> Result<f64> {
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let norm = v.frobenius_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v.scale(1.0 / norm);
        let w = op(&v)?;
        lambda = v.as_slice().iter().zip(w.as_slice()).map(|(x, y)| x * y).sum();
        v = w;
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests;
