use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};

use samplet_core::compression::{DEFAULT_ETA, DEFAULT_ORDER};
use samplet_core::geometry::{load_points_path, PointCloud};
use samplet_core::kernels::{KernelFamily, KernelSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Matern,
    Gaussian,
}

/// A number, or a number divided by the point count written as `c/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerN {
    Abs(f64),
    OverN(f64),
}

impl PerN {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            PerN::Abs(v) => v,
            PerN::OverN(c) => c / n as f64,
        }
    }
}

impl FromStr for PerN {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        match s.strip_suffix("/N").or_else(|| s.strip_suffix("/n")) {
            Some(c) => Ok(PerN::OverN(parse(c)?)),
            None => Ok(PerN::Abs(parse(s)?)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PointSource {
    /// Point file (CSV, or the binary SPLT format).
    #[arg(long, conflicts_with = "random")]
    pub points: Option<PathBuf>,

    /// Uniform random cloud on the unit cube: N d seed.
    #[arg(long, num_args = 3, value_names = ["N", "D", "SEED"])]
    pub random: Option<Vec<u64>>,
}

impl PointSource {
    pub fn load(&self) -> Result<(PointCloud, Option<u64>), CliError> {
        match (&self.points, &self.random) {
            (Some(path), None) => Ok((load_points_path(path, None)?, None)),
            (None, Some(r)) => {
                let (n, d, seed) = (r[0] as usize, r[1] as usize, r[2]);
                if n == 0 || d == 0 {
                    return Err(CliError::Usage("--random needs N > 0 and d > 0".into()));
                }
                Ok((PointCloud::random_uniform(n, d, seed)?, Some(seed)))
            }
            _ => Err(CliError::Usage("give either --points FILE or --random N d seed".into())),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value = "matern")]
    pub kernel: KernelKind,

    /// Matérn order: smoothness p + 1/2.
    #[arg(long, default_value_t = 0)]
    pub p: u32,

    #[arg(long, default_value_t = 0.5)]
    pub ell: f64,

    /// Kernel prefactor; `1/N` scales with the number of points.
    #[arg(long, default_value = "1/N")]
    pub scale: PerN,
}

impl KernelArgs {
    pub fn spec(&self, n: usize) -> Result<KernelSpec, CliError> {
        let family = match self.kernel {
            KernelKind::Matern => KernelFamily::Matern { p: self.p },
            KernelKind::Gaussian => KernelFamily::Gaussian,
        };
        Ok(KernelSpec::new(family, self.ell, self.scale.resolve(n))?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompressArgs {
    /// Number of vanishing moments q + 1.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub vm: usize,

    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,

    /// A-posteriori threshold; `0` keeps the a-priori pattern.
    #[arg(long, default_value = "1e-5/N")]
    pub tau: PerN,

    #[arg(long)]
    pub leaf_size: Option<usize>,

    /// Largest N for which dense reference quantities are computed.
    #[arg(long, default_value_t = 8192)]
    pub dense_cap: usize,

    #[arg(long, value_enum, default_value = "auto")]
    pub assembly: Assembly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Assembly {
    /// Dense transform up to the dense cap, direct above it.
    Auto,
    Dense,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternChoice {
    Apriori,
    Aposteriori,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out_json: Option<PathBuf>,

    /// MatrixMarket dump of the compressed matrix (with a `.json` sidecar).
    #[arg(long)]
    pub out_mm: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_n_forms() {
        assert_eq!("1/N".parse::<PerN>().unwrap().resolve(4), 0.25);
        assert_eq!("1e-5/N".parse::<PerN>().unwrap().resolve(10), 1e-5 / 10.0);
        assert_eq!("0.3".parse::<PerN>().unwrap().resolve(10), 0.3);
        assert!("x/N".parse::<PerN>().is_err());
    }
}
