use std::sync::Arc;

use samplet_core::compression::{
    apply_threshold, assemble_compressed_direct, build_pattern, relative_error_transformed, SCompressedMatrix,
};
use samplet_core::dense::DenseMatrix;
use samplet_core::kernels::assemble_dense_capped;
use samplet_core::samplets::SampletBasis;

use crate::args::{Assembly, CompressArgs, KernelArgs, PatternChoice, PointSource};
use crate::error::CliError;
use crate::report::{timed, BenchReport};

/// A compressed kernel matrix together with everything it was built from.
pub struct Problem {
    pub basis: Arc<SampletBasis>,
    pub apriori: SCompressedMatrix,
    pub aposteriori: SCompressedMatrix,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix(&self, choice: PatternChoice) -> &SCompressedMatrix {
        match choice {
            PatternChoice::Apriori => &self.apriori,
            PatternChoice::Aposteriori => &self.aposteriori,
        }
    }
}

/// Loads the points and compresses the kernel matrix, recording phases and
/// sizes in the returned report. Compression errors are reported whenever
/// the dense path runs.
pub fn build_problem(
    source: &PointSource,
    kernel: &KernelArgs,
    opts: &CompressArgs,
    command: &str,
) -> Result<(Problem, BenchReport), CliError> {
    let (pc, seed) = source.load()?;
    let n = pc.len();
    let spec = kernel.spec(n)?;
    let tau = opts.tau.resolve(n);
    let mut report = BenchReport::new(command, n, pc.dim());
    report.kernel = Some(spec);
    report.eta = Some(opts.eta);
    report.vm = Some(opts.vm);
    report.tau = Some(tau);
    report.seed = seed;
    log::info!("{command}: N = {n}, d = {}", pc.dim());

    let (basis, ms) = timed(|| SampletBasis::from_points(&pc, opts.vm, opts.leaf_size));
    let basis = Arc::new(basis?);
    report.time("basis", ms);
    let (pattern, ms) = timed(|| build_pattern(&basis, opts.eta));
    let pattern = Arc::new(pattern?);
    report.time("pattern", ms);

    let dense = match opts.assembly {
        Assembly::Auto => n <= opts.dense_cap,
        Assembly::Dense => true,
        Assembly::Direct => false,
    };
    let k_sigma = if dense {
        let (ks, ms) = timed(|| -> Result<DenseMatrix, CliError> {
            // An explicit dense request overrides the cap.
            let mut k = assemble_dense_capped(&spec, basis.points(), n.max(opts.dense_cap))?;
            basis.transform_dense_in_place(&mut k);
            Ok(k)
        });
        report.time("dense_transform", ms);
        Some(ks?)
    } else {
        None
    };
    let apriori = match &k_sigma {
        Some(ks) => {
            let (a, ms) = timed(|| SCompressedMatrix::from_dense(ks, pattern.clone()));
            report.time("assemble", ms);
            a?.with_basis(basis.clone())?
        }
        None => {
            let (a, ms) = timed(|| assemble_compressed_direct(&basis, &spec, &pattern));
            report.time("assemble", ms);
            let (a, stats) = a?;
            report.value("kernel_evaluations", stats.kernel_evaluations);
            a
        }
    };
    let (thr, ms) = timed(|| apply_threshold(&apriori, tau));
    let (aposteriori, stats) = thr?;
    report.time("threshold", ms);
    if stats.fully_thresholded {
        report.value("fully_thresholded", true);
    }
    report.nnz("apriori", apriori.nnz());
    report.nnz("aposteriori", aposteriori.nnz());
    report.value("nnz_per_n_apriori", apriori.nnz() as f64 / n as f64);
    report.value("nnz_per_n_aposteriori", aposteriori.nnz() as f64 / n as f64);
    if let Some(ks) = &k_sigma {
        let (errs, ms) = timed(|| -> Result<(f64, f64), CliError> {
            Ok((relative_error_transformed(ks, &apriori)?, relative_error_transformed(ks, &aposteriori)?))
        });
        let (e_apriori, e_aposteriori) = errs?;
        report.time("compression_error", ms);
        report.error("compression_apriori", e_apriori);
        report.error("compression_aposteriori", e_aposteriori);
    }
    let problem = Problem {
        basis,
        apriori,
        aposteriori,
    };
    Ok((problem, report))
}
