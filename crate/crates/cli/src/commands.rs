use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use samplet_core::algebra::{
    error_estimate, masked_product_deviation, Difference, Identity, PatternedProductPlan, Product, Shifted,
    DEFAULT_PROBES,
};
use samplet_core::compression::matrix_market::write_matrix_market;
use samplet_core::compression::{PatternMetadata, SCompressedMatrix};
use samplet_core::geometry::{load_points_path, PointFormat};
use samplet_core::matfun::{exp_series, inv_sqrt, spectral_bounds, sqrt_from_inv_sqrt, SeriesExp, DEFAULT_POWER_ITERS};
use samplet_core::rng::SplitMix64;
use samplet_core::selinv::{block_inverse, ldlt_factorize, OrderingMethod};

use crate::args::{CompressArgs, KernelArgs, OutputArgs, PatternChoice, PointSource};
use crate::error::CliError;
use crate::report::{bench, timed};
use crate::setup::{build_problem, Problem};

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[command(flatten)]
    pub source: PointSource,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub compress: CompressArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Random probe columns of the Frobenius error estimator.
    #[arg(long, default_value_t = DEFAULT_PROBES)]
    pub probes: usize,

    #[arg(long, default_value_t = 1)]
    pub probe_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TimingArgs {
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,

    /// Timed runs; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

fn write_mm(path: &Path, a: &SCompressedMatrix, problem: &Problem, args: &ProblemArgs) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market(&mut w, a)?;
    w.flush()?;
    let meta = PatternMetadata {
        n: problem.n(),
        eta: args.compress.eta,
        q: args.compress.vm.saturating_sub(1),
        tau: args.compress.tau.resolve(problem.n()),
        nnz: a.nnz(),
        level_block_counts: problem.apriori.pattern().level_block_counts(),
    };
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    let mut w = BufWriter::new(File::create(PathBuf::from(sidecar))?);
    serde_json::to_writer_pretty(&mut w, &meta)?;
    writeln!(w)?;
    Ok(())
}

pub fn compress(args: &ProblemArgs) -> Result<(), CliError> {
    let (problem, mut report) = build_problem(&args.source, &args.kernel, &args.compress, "compress")?;
    let n = problem.n() as f64;
    report.value("nnz_per_n_log2n_apriori", problem.apriori.nnz() as f64 / (n * n.log2().max(1.0)));
    if let Some(path) = &args.output.out_mm {
        write_mm(path, &problem.aposteriori, &problem, args)?;
    }
    report.emit(args.output.out_json.as_deref())
}

#[derive(Debug, Clone, Args)]
pub struct MultiplyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    #[command(flatten)]
    pub timing: TimingArgs,

    #[arg(long, value_enum, default_value = "aposteriori")]
    pub pattern: PatternChoice,

    /// Relative size of the uniform perturbation of the second factor.
    #[arg(long, default_value_t = 0.1)]
    pub perturbation: f64,

    #[arg(long, default_value_t = 42)]
    pub perturbation_seed: u64,

    /// Largest N for the entrywise dense product check.
    #[arg(long, default_value_t = 1024)]
    pub exact_cap: usize,
}

/// Every stored value multiplied by `1 + rel * u` with `u` uniform on `[-1, 1)`.
pub fn perturb(a: &SCompressedMatrix, rel: f64, seed: u64) -> SCompressedMatrix {
    let mut rng = SplitMix64::new(seed);
    let mut b = a.clone();
    for v in b.values_mut() {
        *v *= 1.0 + rel * rng.uniform(-1.0, 1.0);
    }
    b
}

pub fn bench_multiply(args: &MultiplyArgs) -> Result<(), CliError> {
    let p = &args.problem;
    let (problem, mut report) = build_problem(&p.source, &p.kernel, &p.compress, "bench-multiply")?;
    let a = problem.matrix(args.pattern);
    let b = perturb(a, args.perturbation, args.perturbation_seed);
    report.value("perturbation", args.perturbation);
    let (plan, ms) = timed(|| PatternedProductPlan::new(a.pattern().clone(), b.pattern().clone(), a.pattern().clone()));
    let plan = plan?;
    report.time("plan", ms);
    let (c, ms) = bench(args.timing.warmup, args.timing.repeats, || plan.execute(a, &b))?;
    report.time("multiply", ms);
    report.value("flops", plan.flop_count());
    report.nnz("product", c.nnz());
    let (e, ms) = timed(|| error_estimate(&Difference(&Product(a, &b), &c), args.probe.probes, args.probe.probe_seed));
    report.time("error_estimate", ms);
    report.error("multiplication", e?);
    if problem.n() <= args.exact_cap {
        report.error("masked_entrywise", masked_product_deviation(a, &b, &c)?);
    }
    if args.perturbation == 0.0 {
        report.value("product_asymmetry", c.asymmetry());
    }
    if let Some(path) = &p.output.out_mm {
        write_mm(path, &c, &problem, p)?;
    }
    report.emit(p.output.out_json.as_deref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OrderingChoice {
    Auto,
    Cluster,
    MinDegree,
    Natural,
}

impl From<OrderingChoice> for OrderingMethod {
    fn from(c: OrderingChoice) -> Self {
        match c {
            OrderingChoice::Auto => OrderingMethod::Auto,
            OrderingChoice::Cluster => OrderingMethod::ClusterDissection,
            OrderingChoice::MinDegree => OrderingMethod::MinimumDegree,
            OrderingChoice::Natural => OrderingMethod::Identity,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    #[command(flatten)]
    pub timing: TimingArgs,

    #[arg(long, value_enum, default_value = "aposteriori")]
    pub pattern: PatternChoice,

    /// Ridge parameters, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-6, 1e-4, 1e-2])]
    pub mu: Vec<f64>,

    #[arg(long, value_enum, default_value = "auto")]
    pub ordering: OrderingChoice,

    /// Recursive block inversion of this depth instead of the selected
    /// inverse of one factorization.
    #[arg(long)]
    pub block_depth: Option<usize>,
}

pub fn bench_invert(args: &InvertArgs) -> Result<(), CliError> {
    let p = &args.problem;
    let (problem, mut report) = build_problem(&p.source, &p.kernel, &p.compress, "bench-invert")?;
    let a = problem.matrix(args.pattern);
    let mus: Vec<f64> = args.mu.clone();
    if mus.is_empty() || mus.iter().any(|&m| !(m >= 0.0)) {
        return Err(CliError::Usage("--mu needs nonnegative values".into()));
    }
    report.mu = mus.clone();
    let mut factors = Vec::new();
    for &mu in &mus {
        let z = match args.block_depth {
            Some(depth) => {
                let (z, ms) = bench(args.timing.warmup, args.timing.repeats, || block_inverse(a, mu, depth))?;
                report.time(&format!("block_inverse[{mu:e}]"), ms);
                z
            }
            None => {
                let (f, ms) = bench(args.timing.warmup, args.timing.repeats, || ldlt_factorize(a, mu, args.ordering.into()))?;
                report.time(&format!("factorize[{mu:e}]"), ms);
                let (z, ms) = bench(args.timing.warmup, args.timing.repeats, || f.selected_inverse(a.pattern()))?;
                report.time(&format!("selected_inverse[{mu:e}]"), ms);
                factors.push(serde_json::json!({ "mu": mu, "stats": f.stats() }));
                z.with_bases(a.row_basis().cloned(), a.col_basis().cloned())?
            }
        };
        let shifted = Shifted(a, mu);
        let residual = error_estimate(
            &Difference(&Product(&z, &shifted), &Identity(a.nrows())),
            args.probe.probes,
            args.probe.probe_seed,
        )?;
        report.error(&format!("inversion_residual[{mu:e}]"), residual);
    }
    if !factors.is_empty() {
        report.value("factors", factors);
    }
    report.emit(p.output.out_json.as_deref())
}

#[derive(Debug, Clone, Args)]
pub struct SqrtArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,

    #[arg(long, value_enum, default_value = "aposteriori")]
    pub pattern: PatternChoice,

    #[arg(long, default_value_t = 1e-4)]
    pub mu: f64,

    /// Quadrature sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 5, 7, 9])]
    pub quad_points: Vec<usize>,

    /// Spectral enclosure `lower,upper` of A + mu I; defaults to `mu,1`.
    #[arg(long, value_delimiter = ',')]
    pub bounds: Option<Vec<f64>>,

    /// Estimate the upper bound by power iteration instead.
    #[arg(long)]
    pub estimate_bounds: bool,
}

pub fn sqrt(args: &SqrtArgs) -> Result<(), CliError> {
    let p = &args.problem;
    let (problem, mut report) = build_problem(&p.source, &p.kernel, &p.compress, "sqrt")?;
    let a = problem.matrix(args.pattern);
    let mu = args.mu;
    if !(mu > 0.0) {
        return Err(CliError::Usage("--mu must be positive".into()));
    }
    report.mu = vec![mu];
    let bounds = match (&args.bounds, args.estimate_bounds) {
        (Some(b), _) if b.len() == 2 => (b[0], b[1]),
        (Some(_), _) => return Err(CliError::Usage("--bounds takes lower,upper".into())),
        (None, true) => {
            let (_, hi) = spectral_bounds(a, DEFAULT_POWER_ITERS, args.probe.probe_seed, Some(0.0))?;
            (mu, hi + mu)
        }
        (None, false) => (mu, 1.0),
    };
    report.value("bounds", bounds);
    let target = a.pattern().clone();
    let shifted = Shifted(a, mu);
    let mut rows = Vec::new();
    for &k in &args.quad_points {
        let (s, ms) = timed(|| -> Result<SCompressedMatrix, CliError> {
            let s_inv = inv_sqrt(a, mu, k, bounds, &target)?;
            Ok(sqrt_from_inv_sqrt(a, mu, &s_inv, &target)?)
        });
        let s = s?;
        let residual = error_estimate(&Difference(&Product(&s, &s), &shifted), args.probe.probes, args.probe.probe_seed)?;
        report.time(&format!("sqrt[K={k}]"), ms);
        report.error(&format!("sqrt_residual[K={k}]"), residual);
        rows.push(serde_json::json!({ "K_quad": k, "e_F_residual": residual, "time_ms": ms }));
    }
    report.value("sweep", rows);
    report.emit(p.output.out_json.as_deref())
}

#[derive(Debug, Clone, Args)]
pub struct ExpArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,

    #[arg(long, value_enum, default_value = "aposteriori")]
    pub pattern: PatternChoice,

    /// Series lengths, comma separated; the count includes the identity.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 30])]
    pub terms: Vec<usize>,

    /// Length of the reference series, formed both on the pattern and
    /// implicitly.
    #[arg(long, default_value_t = 30)]
    pub reference_terms: usize,
}

pub fn exp(args: &ExpArgs) -> Result<(), CliError> {
    let p = &args.problem;
    let (problem, mut report) = build_problem(&p.source, &p.kernel, &p.compress, "exp")?;
    let a = problem.matrix(args.pattern);
    let (_, hi) = spectral_bounds(a, DEFAULT_POWER_ITERS, args.probe.probe_seed, Some(0.0))?;
    report.value("norm_estimate", hi / 1.01);
    let target = a.pattern().clone();
    let implicit = SeriesExp {
        op: a,
        terms: args.reference_terms,
    };
    let (reference, ms) = timed(|| exp_series(a, args.reference_terms, &target));
    let reference = reference?;
    report.time(&format!("exp[terms={}]", args.reference_terms), ms);
    let mut rows = Vec::new();
    for &t in &args.terms {
        let e = if t == args.reference_terms {
            reference.clone()
        } else {
            let (e, ms) = timed(|| exp_series(a, t, &target));
            report.time(&format!("exp[terms={t}]"), ms);
            e?
        };
        let diff = error_estimate(&Difference(&reference, &e), args.probe.probes, args.probe.probe_seed)?;
        let vs_implicit = error_estimate(&Difference(&implicit, &e), args.probe.probes, args.probe.probe_seed)?;
        report.error(&format!("exp_difference[terms={t}]"), diff);
        report.error(&format!("exp_vs_implicit[terms={t}]"), vs_implicit);
        rows.push(serde_json::json!({ "terms": t, "e_F_difference": diff, "e_F_vs_implicit": vs_implicit }));
    }
    report.value("sweep", rows);
    report.emit(p.output.out_json.as_deref())
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long)]
    pub output: PathBuf,
}

/// Point files between CSV and the binary format, chosen by extension.
pub fn convert(args: &ConvertArgs) -> Result<(), CliError> {
    let pc = load_points_path(&args.input, None)?;
    let mut w = BufWriter::new(File::create(&args.output)?);
    match PointFormat::from_path(&args.output) {
        PointFormat::Csv => pc.write_csv(&mut w)?,
        PointFormat::F64Le => pc.write_f64le(&mut w)?,
    }
    w.flush()?;
    log::info!("wrote {} points of dimension {} to {}", pc.len(), pc.dim(), args.output.display());
    Ok(())
}
