use std::sync::Arc;

use nalgebra::DMatrix;

use samplet_core::algebra::{error_estimate, formatted_multiply, Difference, PatternedProductPlan, DEFAULT_PROBES};
use samplet_core::compression::{apply_threshold, assemble_compressed_direct, build_pattern, compression_error, SCompressedMatrix};
use samplet_core::geometry::PointCloud;
use samplet_core::kernels::{assemble_dense, KernelSpec};
use samplet_core::matfun::{exp_series, inv_sqrt, spectral_bounds, sqrt_from_inv_sqrt};
use samplet_core::samplets::SampletBasis;
use samplet_core::selinv::{ldlt_factorize, OrderingMethod};

fn kernel_matrix(pc: &PointCloud, ell: f64, tau_times_n: f64) -> (Arc<SampletBasis>, SCompressedMatrix) {
    let n = pc.len();
    let basis = Arc::new(SampletBasis::from_points(pc, 4, None).unwrap());
    let pattern = Arc::new(build_pattern(&basis, 1.25).unwrap());
    let spec = KernelSpec::exponential(ell, 1.0 / n as f64).unwrap();
    let (a, _) = assemble_compressed_direct(&basis, &spec, &pattern).unwrap();
    let (a, _) = apply_threshold(&a, tau_times_n / n as f64).unwrap();
    (basis, a)
}

fn nalg(a: &SCompressedMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.nrows(), a.ncols(), a.to_dense().as_slice())
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let pc = PointCloud::random_uniform(1500, 2, 11).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (_, a) = kernel_matrix(&pc, 1.0, 1e-5);
            let target = a.pattern().clone();
            let product = formatted_multiply(&a, &a, &target).unwrap();
            let inverse = ldlt_factorize(&a, 1e-4, OrderingMethod::Auto).unwrap().selected_inverse(&target).unwrap();
            let exp = exp_series(&a, 5, &target).unwrap();
            let err = error_estimate(&Difference(&a, &product), DEFAULT_PROBES, 3).unwrap();
            [bits(a.values()), bits(product.values()), bits(inverse.values()), bits(exp.values()), bits(&[err])]
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn product_error_obeys_the_triangle_inequality() {
    let n = 512;
    let pc = PointCloud::random_uniform(n, 2, 12).unwrap();
    let basis = Arc::new(SampletBasis::from_points(&pc, 4, None).unwrap());
    let pattern = Arc::new(build_pattern(&basis, 1.25).unwrap());
    let transformed = |ell: f64| {
        let spec = KernelSpec::exponential(ell, 1.0 / n as f64).unwrap();
        let k = assemble_dense(&spec, basis.points()).unwrap();
        let ks = basis.transform_dense(&k).unwrap();
        let (a, _) = assemble_compressed_direct(&basis, &spec, &pattern).unwrap();
        (DMatrix::from_row_slice(n, n, ks.as_slice()), a)
    };
    let (ka, a) = transformed(1.0);
    let (kb, b) = transformed(0.3);
    let c = PatternedProductPlan::new(pattern.clone(), pattern.clone(), pattern.clone()).unwrap().execute(&a, &b).unwrap();
    let (da, db, dc) = (nalg(&a), nalg(&b), nalg(&c));

    let total = (&dc - &ka * &kb).norm();
    let restriction = (&dc - &da * &db).norm();
    let spectral = |m: &DMatrix<f64>| m.clone().singular_values().max();
    let from_a = (&da - &ka).norm() * spectral(&db);
    let from_b = spectral(&ka) * (&db - &kb).norm();
    assert!(total <= restriction + from_a + from_b, "{total} > {restriction} + {from_a} + {from_b}");
    assert!(total > 0.0 && restriction > 0.0);
}

#[test]
fn inverse_root_commutes_with_its_argument() {
    let n = 512;
    let mu = 1e-4;
    let pc = PointCloud::random_uniform(n, 3, 13).unwrap();
    let spec = KernelSpec::exponential(0.5, 1.0 / n as f64).unwrap();
    let (basis, a) = kernel_matrix(&pc, 0.5, 0.0);
    let target = a.pattern().clone();
    let s_inv = inv_sqrt(&a, mu, 7, (mu, 1.0), &target).unwrap();
    let shifted = a.shifted(mu).unwrap();
    let left = formatted_multiply(&s_inv, &shifted, &target).unwrap();
    let right = formatted_multiply(&shifted, &s_inv, &target).unwrap();
    let commutator = error_estimate(&Difference(&left, &right), DEFAULT_PROBES, 1).unwrap();

    let s = sqrt_from_inv_sqrt(&a, mu, &s_inv, &target).unwrap();
    let square = formatted_multiply(&s, &s, &target).unwrap();
    let quadrature = error_estimate(&Difference(&square, &shifted), DEFAULT_PROBES, 1).unwrap();
    let k = assemble_dense(&spec, basis.points()).unwrap();
    let (_, norm) = spectral_bounds(&a, 50, 1, Some(0.0)).unwrap();
    let compression = compression_error(&basis, &k, &a).unwrap() * norm;
    assert!(commutator <= 10.0 * (quadrature + compression), "{commutator} vs {quadrature} + {compression}");
}
