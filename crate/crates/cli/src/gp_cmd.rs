use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Subcommand};
use nalgebra::{DMatrix, DVector};

use samplet_core::compression::{relative_error_transformed, DEFAULT_ETA};
use samplet_core::geometry::{load_points_path, load_values_path, PointCloud};
use samplet_core::gp::{make_constraints, sphere_cloud, GpConfig, GpModel, DEFAULT_X_ORDER, DEFAULT_Z_ORDER};
use samplet_core::kernels::{assemble_dense, assemble_dense_cross};

use crate::args::{KernelArgs, PerN};
use crate::error::CliError;
use crate::report::{timed, BenchReport};

#[derive(Debug, Clone, Subcommand)]
pub enum GpCommand {
    /// Posterior mean and standard deviation at evaluation sites.
    Predict(PredictArgs),
    /// Labeled sites for implicit-surface learning.
    MakeConstraints(ConstraintArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub train: PathBuf,

    /// One label per training site.
    #[arg(long)]
    pub labels: PathBuf,

    #[arg(long)]
    pub eval: PathBuf,

    /// Noise variance.
    #[arg(long)]
    pub mu: f64,

    #[command(flatten)]
    pub kernel: KernelArgs,

    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,

    /// Vanishing moments on the training sites.
    #[arg(long, default_value_t = DEFAULT_X_ORDER)]
    pub vm: usize,

    /// Vanishing moments on the evaluation sites.
    #[arg(long, default_value_t = DEFAULT_Z_ORDER)]
    pub vm_eval: usize,

    #[arg(long, default_value = "1e-5/N")]
    pub tau: PerN,

    /// Threshold of the cross matrix.
    #[arg(long, default_value = "1e-4/N")]
    pub tau_cross: PerN,

    /// Prediction CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub out_json: Option<PathBuf>,

    /// Also evaluate the dense formulas when N and M are at most this.
    #[arg(long, default_value_t = 0)]
    pub dense_check: usize,
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let x = load_points_path(&args.train, None)?;
    let y = load_values_path(&args.labels)?;
    let z = load_points_path(&args.eval, None)?;
    if y.len() != x.len() {
        return Err(CliError::Usage(format!("{} labels for {} training sites", y.len(), x.len())));
    }
    if z.dim() != x.dim() {
        return Err(CliError::Usage(format!(
            "evaluation sites have dimension {}, training sites {}",
            z.dim(),
            x.dim()
        )));
    }
    let n = x.len();
    let spec = args.kernel.spec(n)?;
    let config = GpConfig {
        eta: args.eta,
        x_order: args.vm,
        z_order: args.vm_eval,
        tau_xx: Some(args.tau.resolve(n)),
        tau_zx: Some(args.tau_cross.resolve(n)),
    };
    let mut report = BenchReport::new("gp-predict", n, x.dim());
    report.kernel = Some(spec);
    report.eta = Some(args.eta);
    report.vm = Some(args.vm);
    report.tau = config.tau_xx;
    report.mu = vec![args.mu];
    report.value("M", z.len());
    report.value("tau_cross", config.tau_zx);

    let (model, ms) = timed(|| GpModel::fit(&x, spec, args.mu, config));
    let model = model?;
    report.time("fit", ms);
    report.nnz("k_xx", model.k_xx().nnz());
    report.value("factor", model.factor().stats());
    let (kzx, ms) = timed(|| -> Result<_, CliError> {
        let zb = model.z_basis(&z)?;
        Ok(model.compress_cross(&zb)?)
    });
    let kzx = kzx?;
    report.time("compress_cross", ms);
    report.nnz("k_zx", kzx.nnz());
    let (mean, ms) = timed(|| model.posterior_mean(&y, &kzx));
    let mean = mean?;
    report.time("mean", ms);
    let (var, ms) = timed(|| model.posterior_variance_diag(&z, None));
    let var = var?;
    report.time("variance", ms);

    if n <= args.dense_check && z.len() <= args.dense_check {
        let (dm, dv) = dense_posterior(&model, &x, &z, &y)?;
        report.error("mean_vs_dense", rel(&mean, &dm));
        report.error("variance_vs_dense", rel(&var, &dv));
        let mut k = assemble_dense(model.spec(), model.x_basis().points())?;
        model.x_basis().transform_dense_in_place(&mut k);
        report.error("compression", relative_error_transformed(&k, model.k_xx())?);
    }

    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_prediction(&mut w, &z, &mean, &var)?;
            w.flush()?;
            report.emit(args.out_json.as_deref())?;
        }
        None => {
            let stdout = std::io::stdout();
            write_prediction(&mut stdout.lock(), &z, &mean, &var)?;
            if args.out_json.is_some() {
                report.emit(args.out_json.as_deref())?;
            }
        }
    }
    Ok(())
}

fn write_prediction<W: Write>(w: &mut W, z: &PointCloud, mean: &[f64], var: &[f64]) -> Result<(), CliError> {
    let header: Vec<String> = (0..z.dim()).map(|k| format!("x{k}")).collect();
    writeln!(w, "{},mean,stddev", header.join(","))?;
    for i in 0..z.len() {
        for c in z.point(i) {
            write!(w, "{c:?},")?;
        }
        writeln!(w, "{:?},{:?}", mean[i], var[i].sqrt())?;
    }
    Ok(())
}

/// Mean and variance from the dense formulas, by Cholesky factorization.
fn dense_posterior(model: &GpModel, x: &PointCloud, z: &PointCloud, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let n = x.len();
    let k = assemble_dense(model.spec(), x)?;
    let k = DMatrix::from_row_slice(n, n, k.as_slice()) + DMatrix::identity(n, n) * model.mu();
    let chol = k.cholesky().ok_or_else(|| {
        CliError::Core(samplet_core::error::Error::Numeric("dense kernel matrix is not positive definite".into()))
    })?;
    let kzx = assemble_dense_cross(model.spec(), z, x)?;
    let kzx = DMatrix::from_row_slice(z.len(), n, kzx.as_slice());
    let mean = &kzx * chol.solve(&DVector::from_column_slice(y));
    let w = chol.l().solve_lower_triangular(&kzx.transpose()).expect("nonsingular factor");
    let k0 = model.spec().eval(0.0);
    let var = w.column_iter().map(|c| k0 - c.norm_squared()).collect();
    Ok((mean.as_slice().to_vec(), var))
}

#[derive(Debug, Clone, Args)]
pub struct ConstraintArgs {
    /// Surface points; without it a synthetic sphere is used.
    #[arg(long)]
    pub surface: Option<PathBuf>,

    /// Size of the synthetic sphere.
    #[arg(long, default_value_t = 2000)]
    pub sphere: usize,

    #[arg(long, default_value_t = 3)]
    pub dim: usize,

    /// Sites on the inner sphere, labeled -1.
    #[arg(long, default_value_t = 240)]
    pub inner: usize,

    /// Sites on the enclosing box, labeled +1.
    #[arg(long, default_value_t = 1200)]
    pub outer: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output points (CSV or binary by extension).
    #[arg(long)]
    pub out: PathBuf,

    /// Output labels, one per line.
    #[arg(long)]
    pub labels: PathBuf,
}

pub fn make(args: &ConstraintArgs) -> Result<(), CliError> {
    let surface = match &args.surface {
        Some(p) => load_points_path(p, None)?,
        None => sphere_cloud(args.sphere, args.dim, 1.0, args.seed)?,
    };
    let c = make_constraints(&surface, args.inner, args.outer, args.seed)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    match samplet_core::geometry::PointFormat::from_path(&args.out) {
        samplet_core::geometry::PointFormat::Csv => c.points.write_csv(&mut w)?,
        samplet_core::geometry::PointFormat::F64Le => c.points.write_f64le(&mut w)?,
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(&args.labels)?);
    for l in &c.labels {
        writeln!(w, "{l:?}")?;
    }
    w.flush()?;
    log::info!("{} constraint sites written to {}", c.points.len(), args.out.display());
    Ok(())
}
