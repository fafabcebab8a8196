use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use samplet_core::kernels::KernelSpec;

use crate::error::CliError;

/// Machine-readable record of one run. Timings vary between runs; every
/// other field is reproducible for a fixed configuration and seed.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub command: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub kernel: Option<KernelSpec>,
    pub eta: Option<f64>,
    /// Vanishing moments q + 1.
    pub vm: Option<usize>,
    pub tau: Option<f64>,
    pub mu: Vec<f64>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub timings_ms: BTreeMap<String, f64>,
    pub nnz: BTreeMap<String, u64>,
    pub errors: BTreeMap<String, f64>,
    pub values: BTreeMap<String, serde_json::Value>,
}

impl BenchReport {
    pub fn new(command: &str, n: usize, d: usize) -> Self {
        Self {
            command: command.to_string(),
            n,
            d,
            kernel: None,
            eta: None,
            vm: None,
            tau: None,
            mu: Vec::new(),
            seed: None,
            threads: rayon::current_num_threads(),
            timings_ms: BTreeMap::new(),
            nnz: BTreeMap::new(),
            errors: BTreeMap::new(),
            values: BTreeMap::new(),
        }
    }

    pub fn time(&mut self, phase: &str, ms: f64) {
        self.timings_ms.insert(phase.to_string(), ms);
    }

    pub fn error(&mut self, name: &str, value: f64) {
        self.errors.insert(name.to_string(), value);
    }

    pub fn nnz(&mut self, name: &str, value: usize) {
        self.nnz.insert(name.to_string(), value as u64);
    }

    pub fn value(&mut self, name: &str, value: impl Serialize) {
        self.values
            .insert(name.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn emit(&self, path: Option<&Path>) -> Result<(), CliError> {
        match path {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                serde_json::to_writer_pretty(&mut w, self)?;
                writeln!(w)?;
                w.flush()?;
            }
            None => {
                let stdout = std::io::stdout();
                let mut w = stdout.lock();
                serde_json::to_writer_pretty(&mut w, self)?;
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Runs `f` once and returns its result with the elapsed milliseconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// `warmup` discarded runs, then the median wall time of `repeats` runs.
/// The result of the last run is returned.
pub fn bench<T, E>(warmup: usize, repeats: usize, mut f: impl FnMut() -> Result<T, E>) -> Result<(T, f64), E> {
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let (out, ms) = timed(&mut f);
        last = Some(out?);
        times.push(ms);
    }
    times.sort_by(f64::total_cmp);
    Ok((last.unwrap(), times[times.len() / 2]))
}
