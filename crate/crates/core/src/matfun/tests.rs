use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::algebra::{error_estimate, Difference, Product, Shifted};
use crate::compression::{build_pattern, compress_dense};
use crate::geometry::PointCloud;
use crate::kernels::{assemble_dense, KernelSpec};
use crate::samplets::SampletBasis;

/// Power series of the complete integrals, summed until terms vanish.
fn series_ke(m: f64) -> (f64, f64) {
    let (mut k, mut e) = (0.0, 0.0);
    let mut coef = 1.0f64;
    for n in 0..2000 {
        if n > 0 {
            let r = (2 * n - 1) as f64 / (2 * n) as f64;
            coef *= r;
        }
        let term = coef * coef * m.powi(n);
        k += term;
        e -= term / (2 * n - 1) as f64;
        if term < 1e-20 {
            break;
        }
    }
    (FRAC_PI_2 * k, FRAC_PI_2 * e)
}

#[test]
fn complete_integrals() {
    let (k, e) = elliptic_ke(0.5).unwrap();
    assert!((k - 1.85407467730137).abs() < 1e-13);
    assert!((e - 1.35064388104768).abs() < 1e-13);
    let (k0, e0) = elliptic_ke(0.0).unwrap();
    assert_eq!((k0, e0), (FRAC_PI_2, FRAC_PI_2));
    for m in [0.1, 0.3, 0.7, 0.9] {
        let (k, e) = elliptic_ke(m).unwrap();
        let (ks, es) = series_ke(m);
        assert!((k - ks).abs() < 1e-12 && (e - es).abs() < 1e-12, "m={m}");
    }
    assert!(elliptic_ke(1.5).is_err());
}

#[test]
fn jacobi_degenerate_cases() {
    for u in [-2.0, 0.3, 1.7, 10.0] {
        let (sn, cn, dn) = jacobi_elliptic(u, 0.0).unwrap();
        assert_eq!((sn, cn, dn), (f64::sin(u), f64::cos(u), 1.0));
        let (sn, cn, dn) = jacobi_elliptic(u, 1.0).unwrap();
        assert!((sn - f64::tanh(u)).abs() < 1e-15);
        assert!((cn - 1.0 / f64::cosh(u)).abs() < 1e-15 && cn == dn);
    }
}

#[test]
fn sn_reaches_one_at_quarter_period() {
    for m in [0.2, 0.5, 0.99, 1.0 - 1e-8] {
        let k = elliptic_k(m).unwrap();
        let (sn, cn, dn) = jacobi_elliptic(k, m).unwrap();
        assert!((sn - 1.0).abs() < 1e-12 && cn.abs() < 1e-7 && (dn - (1.0 - m).sqrt()).abs() < 1e-10, "m={m} {sn} {cn} {dn}");
    }
}

proptest! {
    #[test]
    fn jacobi_identities(u in -20.0f64..20.0, m in 0.0f64..1.0) {
        let (sn, cn, dn) = jacobi_elliptic(u, m).unwrap();
        prop_assert!((sn * sn + cn * cn - 1.0).abs() < 1e-12);
        prop_assert!((dn * dn + m * sn * sn - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_shifts_are_positive(k in 1usize..40, lo in 1e-8f64..1.0) {
        let q = EllipticQuadrature::new(k, lo, 1.0).unwrap();
        prop_assert!(q.shifts.iter().all(|&s| s > 0.0));
        prop_assert!(q.weights.iter().all(|&w| w > 0.0));
    }
}

fn scalar_error(k: usize, lo: f64, hi: f64) -> f64 {
    let q = EllipticQuadrature::new(k, lo, hi).unwrap();
    (0..=40)
        .map(|i| lo * (hi / lo).powf(i as f64 / 40.0))
        .map(|a| (q.apply_scalar(a) * a.sqrt() - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn scalar_quadrature_converges_root_exponentially() {
    let mu = 1e-4;
    let errs: Vec<f64> = [2, 4, 8, 16].iter().map(|&k| scalar_error(k, mu, 1.0)).collect();
    assert!(errs[3] <= 1e-8, "{errs:?}");
    // log error is close to linear in sqrt(K) or better: it decays at least
    // as fast as exp(-c sqrt K) with one rate across the sweep.
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
    let scalar_one = EllipticQuadrature::new(12, mu, 1.0).unwrap().apply_scalar(1.0);
    assert!((scalar_one - 1.0).abs() <= 1e-6);
    let q4 = EllipticQuadrature::new(4, 1.0, 4.0).unwrap().apply_scalar(4.0);
    let q12 = EllipticQuadrature::new(12, 1.0, 4.0).unwrap().apply_scalar(4.0);
    assert!((q12 - 0.5).abs() < 1e-3 * (q4 - 0.5).abs());
}

#[test]
fn identity_matrix_functions() {
    let i = SCompressedMatrix::identity(20);
    let p = i.pattern().clone();
    let s_inv = inv_sqrt(&i, 0.0, 16, (0.5, 2.0), &p).unwrap();
    assert!(s_inv.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    let s = sqrt_from_inv_sqrt(&i, 0.0, &s_inv, &p).unwrap();
    assert_eq!(s.values(), s_inv.values());
    let e = exp_series(&SCompressedMatrix::zeros(p.clone()), 8, &p).unwrap();
    assert!(e.values().iter().all(|&v| v == 1.0));
}

#[test]
fn nilpotent_exponential_is_exact() {
    let full = Arc::new(SparsityPattern::full(2, 2));
    let n = SCompressedMatrix::new(full.clone(), vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    for terms in [2, 3, 10] {
        assert_eq!(exp_series(&n, terms, &full).unwrap().values(), &[1.0, 1.0, 0.0, 1.0]);
    }
    assert_eq!(exp_series(&n, 1, &full).unwrap().values(), &[1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn exp_series_terms_count_the_identity() {
    let d = SCompressedMatrix::identity(3).shifted(-0.5).unwrap();
    let p = d.pattern().clone();
    let e = exp_series(&d, 3, &p).unwrap();
    assert!((e.values()[0] - (1.0 + 0.5 + 0.125)).abs() < 1e-15);
}

fn small_spd(n: usize, seed: u64) -> (SCompressedMatrix, DMatrix<f64>) {
    let pc = PointCloud::random_uniform(n, 2, seed).unwrap();
    let spec = KernelSpec::exponential(0.5, 1.0 / n as f64).unwrap();
    let k = assemble_dense(&spec, &pc).unwrap();
    let full = Arc::new(SparsityPattern::full(n, n));
    let a = SCompressedMatrix::from_dense(&k, full).unwrap();
    (a, DMatrix::from_row_slice(n, n, k.as_slice()))
}

#[test]
fn inv_sqrt_matches_eigendecomposition() {
    let (a, dense) = small_spd(60, 3);
    let mu = 1e-3;
    let eig = (dense + DMatrix::identity(60, 60) * mu).symmetric_eigen();
    let oracle = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * eig.eigenvectors.transpose();
    let s_inv = inv_sqrt(&a, mu, 16, (mu, 1.0), a.pattern()).unwrap().to_dense();
    let mut err: f64 = 0.0;
    for i in 0..60 {
        for j in 0..60 {
            err = err.max((s_inv.get(i, j) - oracle[(i, j)]).abs());
        }
    }
    assert!(err < 1e-8 * oracle.amax(), "{err}");
}

#[test]
fn spectral_bounds_of_diagonal() {
    let i = SCompressedMatrix::identity(10);
    let (_, hi) = spectral_bounds(&i, 50, 1, Some(1e-3)).unwrap();
    assert!((hi - 1.01).abs() < 1e-8);
    let pat = Arc::new(SparsityPattern::identity(3));
    let d = SCompressedMatrix::new(pat, vec![1.0, 2.0, 3.0]).unwrap();
    let (lo, hi) = spectral_bounds(&d, 200, 4, None).unwrap();
    assert!((hi / 1.01 - 3.0).abs() < 1e-6, "{hi}");
    assert!((lo / 0.99 - 1.0).abs() < 1e-6, "{lo}");
}

#[test]
fn scaled_kernel_norm_is_below_one() {
    let pc = PointCloud::random_uniform(400, 3, 9).unwrap();
    let b = Arc::new(SampletBasis::from_points(&pc, 3, None).unwrap());
    let spec = KernelSpec::exponential(0.5, 1.0 / 400.0).unwrap();
    let k = assemble_dense(&spec, b.points()).unwrap();
    let p = Arc::new(build_pattern(&b, 1.25).unwrap());
    let a = compress_dense(&b, &k, &p, 0.0).unwrap();
    let (_, hi) = spectral_bounds(&a, 50, 2, Some(1e-4)).unwrap();
    assert!(hi > 0.05 && hi <= 1.0, "{hi}");
}

#[test]
fn compressed_sqrt_and_exp_residuals() {
    let n = 400;
    let pc = PointCloud::random_uniform(n, 3, 5).unwrap();
    let b = Arc::new(SampletBasis::from_points(&pc, 3, None).unwrap());
    let spec = KernelSpec::exponential(0.5, 1.0 / n as f64).unwrap();
    let k = assemble_dense(&spec, b.points()).unwrap();
    let p = Arc::new(build_pattern(&b, 1.25).unwrap());
    let a = compress_dense(&b, &k, &p, 0.0).unwrap();
    let mu = 1e-4;
    let s_inv = inv_sqrt(&a, mu, 9, (mu, 1.0), &p).unwrap();
    let s = sqrt_from_inv_sqrt(&a, mu, &s_inv, &p).unwrap();
    let shifted = Shifted(&a, mu);
    let square = Product(&s, &s);
    let residual = error_estimate(&Difference(&square, &shifted), 10, 1).unwrap();
    assert!(residual < 5e-3, "{residual}");
    // Commutation: the two one-sided products agree to the same order.
    let s_left = PatternedProductPlan::new(p.clone(), p.clone(), p.clone()).unwrap().execute(&s_inv, &a.shifted(mu).unwrap()).unwrap();
    let diff = error_estimate(&Difference(&s, &s_left), 10, 2).unwrap();
    assert!(diff < 10.0 * residual.max(1e-6), "{diff}");

    let e8 = exp_series(&a, 8, &p).unwrap();
    let reference = SeriesExp { op: &a, terms: 30 };
    let gap = error_estimate(&Difference(&reference, &e8), 10, 3).unwrap();
    assert!(gap < 1e-8, "{gap}");
    // Partial sums approach the long series monotonically.
    let gaps: Vec<f64> = [2, 3, 4, 6]
        .iter()
        .map(|&t| error_estimate(&Difference(&reference, &SeriesExp { op: &a, terms: t }), 10, 3).unwrap())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn invalid_arguments() {
    assert!(EllipticQuadrature::new(0, 0.1, 1.0).is_err());
    assert!(EllipticQuadrature::new(4, 0.0, 1.0).is_err());
    assert!(EllipticQuadrature::new(4, 2.0, 1.0).is_err());
    assert!(jacobi_elliptic(f64::NAN, 0.5).is_err());
    let i = SCompressedMatrix::identity(3);
    assert!(exp_series(&i, 0, i.pattern()).is_err());
}
