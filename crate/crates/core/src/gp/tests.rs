use nalgebra::{DMatrix, DVector};

use super::*;
use crate::compression::compression_error;
use crate::kernels::{assemble_dense, assemble_dense_cross};

fn dense_gp(spec: &KernelSpec, x: &PointCloud, z: &PointCloud, y: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
    let kxx = assemble_dense(spec, x).unwrap();
    let kzx = assemble_dense_cross(spec, z, x).unwrap();
    let n = x.len();
    let kxx = DMatrix::from_row_slice(n, n, kxx.as_slice()) + DMatrix::identity(n, n) * mu;
    let kzx = DMatrix::from_row_slice(z.len(), n, kzx.as_slice());
    let chol = kxx.cholesky().unwrap();
    let mean = &kzx * chol.solve(&DVector::from_column_slice(y));
    let s = chol.solve(&kzx.transpose());
    let var = (0..z.len())
        .map(|i| spec.eval(0.0) - kzx.row(i).dot(&s.column(i).transpose()))
        .collect();
    (mean.as_slice().to_vec(), var)
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn labels(x: &PointCloud) -> Vec<f64> {
    (0..x.len()).map(|i| (3.0 * x.point(i)[0]).sin() + x.point(i)[1]).collect()
}

#[test]
fn matches_dense_formulas() {
    let n = 512;
    let x = PointCloud::random_uniform(n, 2, 21).unwrap();
    let z = PointCloud::random_uniform(300, 2, 22).unwrap();
    let spec = KernelSpec::exponential(0.5, 1.0).unwrap();
    let mu = 1e-2;
    let model = GpModel::fit(&x, spec, mu, GpConfig::default()).unwrap();
    let y = labels(&x);
    let zb = model.z_basis(&z).unwrap();
    let kzx = model.compress_cross(&zb).unwrap();
    let mean = model.posterior_mean(&y, &kzx).unwrap();
    let var = model.posterior_variance_diag(&z, None).unwrap();
    let (dm, dv) = dense_gp(&spec, &x, &z, &y, mu);
    let kd = assemble_dense(&spec, model.x_basis().points()).unwrap();
    let ce = compression_error(model.x_basis(), &kd, model.k_xx()).unwrap();
    assert!(rel(&mean, &dm) <= 10.0 * ce, "{} vs {ce}", rel(&mean, &dm));
    assert!(rel(&var, &dv) <= 10.0 * ce, "{} vs {ce}", rel(&var, &dv));
    assert!(var.iter().all(|&v| v >= 0.0));
}

#[test]
fn interpolates_at_training_sites() {
    let x = PointCloud::random_uniform(200, 2, 23).unwrap();
    let spec = KernelSpec::exponential(0.5, 1.0).unwrap();
    let config = GpConfig {
        tau_xx: Some(0.0),
        tau_zx: Some(0.0),
        ..GpConfig::default()
    };
    let model = GpModel::fit(&x, spec, 1e-12, config).unwrap();
    let y = labels(&x);
    let kzx = model.compress_cross(&model.z_basis(&x).unwrap()).unwrap();
    let mean = model.posterior_mean(&y, &kzx).unwrap();
    assert!(rel(&mean, &y) < 1e-3, "{}", rel(&mean, &y));
    let var = model.posterior_variance_diag(&x, None).unwrap();
    assert!(var.iter().all(|&v| v < 1e-3), "{:?}", var.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn zero_labels_give_zero_mean() {
    let x = PointCloud::random_uniform(150, 2, 24).unwrap();
    let z = PointCloud::random_uniform(40, 2, 25).unwrap();
    let model = GpModel::fit(&x, KernelSpec::exponential(0.3, 1.0).unwrap(), 1e-3, GpConfig::default()).unwrap();
    let kzx = model.compress_cross(&model.z_basis(&z).unwrap()).unwrap();
    assert!(model.posterior_mean(&vec![0.0; 150], &kzx).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn far_sites_recover_the_prior() {
    let x = PointCloud::random_uniform(150, 2, 26).unwrap();
    let far: Vec<f64> = PointCloud::random_uniform(30, 2, 27).unwrap().coords().iter().map(|c| c + 100.0).collect();
    let z = PointCloud::new(2, far).unwrap();
    let spec = KernelSpec::exponential(0.1, 2.0).unwrap();
    let model = GpModel::fit(&x, spec, 1e-3, GpConfig::default()).unwrap();
    let var = model.posterior_variance_diag(&z, None).unwrap();
    assert!(var.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    let kzx = model.compress_cross(&model.z_basis(&z).unwrap()).unwrap();
    let mean = model.posterior_mean(&labels(&x), &kzx).unwrap();
    assert!(mean.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn outputs_follow_caller_order() {
    let x = PointCloud::random_uniform(200, 2, 28).unwrap();
    let z = PointCloud::random_uniform(64, 2, 29).unwrap();
    let spec = KernelSpec::exponential(0.5, 1.0).unwrap();
    let model = GpModel::fit(&x, spec, 1e-2, GpConfig::default()).unwrap();
    let y = labels(&x);
    let kzx = model.compress_cross(&model.z_basis(&z).unwrap()).unwrap();
    let mean = model.posterior_mean(&y, &kzx).unwrap();
    let var = model.posterior_variance_diag(&z, None).unwrap();
    let (dm, dv) = dense_gp(&spec, &x, &z, &y, 1e-2);
    for i in 0..64 {
        assert!((mean[i] - dm[i]).abs() < 1e-3 && (var[i] - dv[i]).abs() < 1e-6, "site {i}");
    }
}

#[test]
fn more_data_never_raises_variance() {
    let big = PointCloud::random_uniform(300, 2, 30).unwrap();
    let small = PointCloud::new(2, big.coords()[..2 * 150].to_vec()).unwrap();
    let z = PointCloud::random_uniform(50, 2, 31).unwrap();
    let spec = KernelSpec::exponential(0.4, 1.0).unwrap();
    let config = GpConfig {
        tau_xx: Some(0.0),
        ..GpConfig::default()
    };
    let v_small = GpModel::fit(&small, spec, 1e-3, config.clone()).unwrap().posterior_variance_diag(&z, None).unwrap();
    let v_big = GpModel::fit(&big, spec, 1e-3, config).unwrap().posterior_variance_diag(&z, None).unwrap();
    for (b, s) in v_big.iter().zip(&v_small) {
        assert!(*b <= s + 1e-8, "{b} > {s}");
    }
}

#[test]
fn cross_on_identical_sites_matches_square_compression() {
    let x = PointCloud::random_uniform(256, 2, 32).unwrap();
    let spec = KernelSpec::exponential(0.5, 1.0).unwrap();
    let config = GpConfig {
        z_order: DEFAULT_X_ORDER,
        tau_xx: Some(0.0),
        tau_zx: Some(0.0),
        ..GpConfig::default()
    };
    let model = GpModel::fit(&x, spec, 1e-3, config).unwrap();
    let zb = model.z_basis(&x).unwrap();
    let kzx = model.compress_cross(&zb).unwrap();
    let square = model.k_xx();
    assert_eq!(kzx.nnz(), square.nnz());
    let worst = kzx
        .values()
        .iter()
        .zip(square.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(worst <= 1e-10, "{worst}");
}

#[test]
fn rejects_bad_inputs() {
    let x = PointCloud::random_uniform(50, 2, 33).unwrap();
    let spec = KernelSpec::exponential(0.5, 1.0).unwrap();
    assert!(GpModel::fit(&x, spec, 0.0, GpConfig::default()).is_err());
    let model = GpModel::fit(&x, spec, 1e-2, GpConfig::default()).unwrap();
    let kzx = model.compress_cross(&model.z_basis(&x).unwrap()).unwrap();
    assert!(model.posterior_mean(&[1.0; 49], &kzx).is_err());
    let mut y = vec![0.0; 50];
    y[3] = f64::NAN;
    assert!(model.posterior_mean(&y, &kzx).is_err());
    let z3 = PointCloud::random_uniform(5, 3, 1).unwrap();
    assert!(model.posterior_variance_diag(&z3, None).is_err());
}

#[test]
fn constraint_layout() {
    let n = 400;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let coords: Vec<f64> = (0..n)
        .flat_map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            [2.0 * r * t.cos(), 2.0 * r * t.sin(), 2.0 * z]
        })
        .collect();
    let surface = PointCloud::new(3, coords).unwrap();
    let c = make_constraints(&surface, 240, 1200, 5).unwrap();
    assert_eq!(c.points.len(), n + 240 + 1200);
    assert_eq!(c.labels.iter().filter(|&&l| l == 0.0).count(), n);
    assert_eq!(c.labels.iter().filter(|&&l| l == -1.0).count(), 240);
    assert_eq!(c.labels.iter().filter(|&&l| l == 1.0).count(), 1200);
    for i in 0..c.points.len() {
        let r = crate::geometry::dist(c.points.point(i), &[0.0; 3]);
        match c.labels[i] {
            l if l < 0.0 => assert!((r - 1.0).abs() < 1e-2, "{r}"),
            l if l > 0.0 => assert!(r > 2.0),
            _ => assert!((r - 2.0).abs() < 1e-12),
        }
    }
    let again = make_constraints(&surface, 240, 1200, 5).unwrap();
    assert_eq!(again.points.coords(), c.points.coords());
}

#[test]
fn sphere_cloud_lies_on_the_sphere() {
    let s = sphere_cloud(500, 3, 2.5, 1).unwrap();
    assert_eq!(s.len(), 500);
    assert!((0..500).all(|i| (crate::geometry::dist(s.point(i), &[0.0; 3]) - 2.5).abs() < 1e-12));
    assert!(sphere_cloud(10, 1, 1.0, 0).is_err());
}
