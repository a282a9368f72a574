//! Experiment plumbing: configs, sweeps, CSV output and the `csdp` CLI.

pub mod bandit_sweep;
pub mod cli;
pub mod config;
pub mod sum_sweep;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hard_inputs::{sample_hard_stream, validate_hard_sample, HardDistParams, HardSample};
use crate::rng::{self, Purpose};

pub use bandit_sweep::{collect_bandit_sweep, run_bandit_sweep, BanditRow, TraceRow};
pub use config::{Experiment, InputFamily, KChoice, MechanismChoice, SweepConfig};
pub use mechanism_test::{MechanismTest, MechanismTestReport};
pub use sum_sweep::{collect_sum_sweep, fit_scaling, read_sum_csv, run_sum_sweep, FitStatistic, ScalingFit, SumRow};

/// A cell that failed; its rows are left out of the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub files: Vec<PathBuf>,
    pub rows: usize,
    pub failures: Vec<CellFailure>,
}

pub(crate) fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// A CSV row type with a fixed column list.
pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

/// Writes rows under their header, creating parent directories.
pub fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, csv_bytes(rows)?)?;
    Ok(())
}

/// Serializes rows to CSV. The header is written even with no rows.
pub fn csv_bytes<T: CsvRow>(rows: &[T]) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(T::HEADER)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Samples one hard stream, validates it, and writes it with its
/// generation record as JSON.
pub fn write_hard_input(params: &HardDistParams, seed: u64, out: &Path) -> Result<HardSample> {
    let sample = sample_hard_stream(params, &mut rng::stream(seed, Purpose::Hard, 0));
    validate_hard_sample(&sample)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, serde_json::to_vec_pretty(&sample)?)?;
    Ok(sample)
}
