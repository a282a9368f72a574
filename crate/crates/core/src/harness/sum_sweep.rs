//! Error sweeps of the running-sum estimator and log-log scaling fits.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, InputFamily, KChoice, MechanismChoice, SweepConfig};
use super::{pool, write_csv, CellFailure, SweepOutcome};
use crate::error::{Error, Result};
use crate::estimator::{process_stream, quantile, StreamOptions};
use crate::hard_inputs::{sample_hard_stream, HardDistParams};
use crate::plan::TreePlan;
use crate::privacy::PrivacyParams;
use crate::rng::{self, Purpose};

/// One trial of one cell. `alpha_hat` is the cell's `(1 - beta)` quantile
/// of `max_error`, repeated on every row of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRow {
    pub n: usize,
    pub k: String,
    pub eps: f64,
    pub mechanism: String,
    pub trial: usize,
    pub max_error: f64,
    pub alpha_hat: f64,
}

impl super::CsvRow for SumRow {
    const HEADER: &'static [&'static str] = &["n", "k", "eps", "mechanism", "trial", "max_error", "alpha_hat"];
}

/// Draws an input stream of length `n`.
pub fn sample_family(family: InputFamily, plan: &TreePlan, epsilon: f64, seed: u64) -> Result<Vec<f64>> {
    let n = plan.n();
    Ok(match family {
        InputFamily::AllOnes => vec![1.0; n],
        InputFamily::Uniform => {
            let mut rng = rng::stream(seed, Purpose::Input, 0);
            (0..n).map(|_| rng.random::<bool>() as u8 as f64).collect()
        }
        InputFamily::Hard => {
            let params = HardDistParams::new(n, plan.k(), epsilon)?;
            sample_hard_stream(&params, &mut rng::stream(seed, Purpose::Hard, 0)).as_values()
        }
    })
}

#[derive(Debug, Clone)]
struct Cell {
    file: usize,
    family: InputFamily,
    n: usize,
    k: KChoice,
    eps: f64,
    budget: PrivacyParams,
    mechanism: MechanismChoice,
}

impl Cell {
    fn label(&self) -> String {
        format!(
            "family={} n={} k={} eps={} delta={} mechanism={}",
            self.family.name(),
            self.n,
            self.k,
            self.eps,
            self.budget.delta(),
            self.mechanism.name()
        )
    }
}

/// Output files of a sweep: one per input family, and per delta when the
/// delta grid has several values.
pub fn sum_output_paths(config: &SweepConfig) -> Vec<PathBuf> {
    let stem = config.output.with_extension("");
    let stem = stem.to_string_lossy();
    let mut paths = Vec::new();
    for family in &config.families {
        for i in 0..config.delta.len() {
            let suffix = if config.delta.len() > 1 { format!(".delta{i}") } else { String::new() };
            paths.push(PathBuf::from(format!("{stem}.{}{suffix}.csv", family.name())));
        }
    }
    paths
}

fn cells(config: &SweepConfig) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    let mut file = 0;
    for &family in &config.families {
        for &delta in &config.delta {
            for &n in &config.n {
                for &k in &config.k {
                    for &eps in &config.epsilon {
                        for &mechanism in &config.mechanism {
                            let budget = PrivacyParams::new(eps, delta)?;
                            out.push(Cell { file, family, n, k, eps, budget, mechanism });
                        }
                    }
                }
            }
            file += 1;
        }
    }
    Ok(out)
}

fn run_trial(config: &SweepConfig, cell: &Cell, plan: &Arc<TreePlan>, seed: u64, transcript: bool) -> Result<(f64, Option<Vec<u8>>)> {
    let values = sample_family(cell.family, plan, cell.eps, seed)?;
    let mech = cell.mechanism.config(config.oracle_constant, config.oracle_variance);
    let options = StreamOptions { seed, record_transcript: transcript };
    let run = process_stream(&values, plan, mech, cell.budget, options)?;
    Ok((run.report.max_abs_error, run.transcript))
}

/// Runs every cell and returns the rows per output file plus the failed
/// cells. Nothing is written.
pub fn collect_sum_sweep(config: &SweepConfig) -> Result<(Vec<Vec<SumRow>>, Vec<CellFailure>)> {
    config.validate()?;
    if config.experiment != Experiment::SumSweep {
        return Err(Error::Config("expected experiment = \"sum-sweep\"".into()));
    }
    let seeds = config.trial_seeds()?;
    let cells = cells(config)?;
    let plans: Vec<Result<Arc<TreePlan>>> = cells.iter().map(|c| c.k.plan(c.n).map(Arc::new)).collect();

    let work: Vec<(usize, usize)> = (0..cells.len())
        .filter(|&c| plans[c].is_ok())
        .flat_map(|c| (0..seeds.len()).map(move |t| (c, t)))
        .collect();
    let results: Vec<Result<f64>> = pool(config.workers)?.install(|| {
        work.par_iter()
            .map(|&(c, t)| {
                let plan = plans[c].as_ref().expect("filtered");
                run_trial(config, &cells[c], plan, seeds[t], false).map(|r| r.0)
            })
            .collect()
    });

    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let mut errors: HashMap<usize, String> = HashMap::new();
    for (&(c, _), res) in work.iter().zip(results) {
        match res {
            Ok(e) => per_cell[c].push(e),
            Err(e) => {
                errors.entry(c).or_insert_with(|| e.to_string());
            }
        }
    }
    for (c, plan) in plans.iter().enumerate() {
        if let Err(e) = plan {
            errors.insert(c, e.to_string());
        }
    }

    let files = config.families.len() * config.delta.len();
    let mut rows: Vec<Vec<SumRow>> = vec![Vec::new(); files];
    let mut failures = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        if let Some(e) = errors.get(&c) {
            failures.push(CellFailure { cell: cell.label(), error: e.clone() });
            continue;
        }
        let alpha_hat = quantile(&per_cell[c], 1.0 - config.beta)?;
        for (trial, &max_error) in per_cell[c].iter().enumerate() {
            rows[cell.file].push(SumRow {
                n: cell.n,
                k: cell.k.to_string(),
                eps: cell.eps,
                mechanism: cell.mechanism.name().to_string(),
                trial,
                max_error,
                alpha_hat,
            });
        }
    }
    Ok((rows, failures))
}

/// Runs the sweep and writes `{stem}.{family}.csv` files. Failed cells are
/// reported in the outcome and leave no rows; the other cells still run.
/// With `dump_transcript`, the transcript of the first trial of the first
/// successful cell is written there.
pub fn run_sum_sweep(config: &SweepConfig, dump_transcript: Option<&Path>) -> Result<SweepOutcome> {
    let (rows, failures) = collect_sum_sweep(config)?;
    let paths = sum_output_paths(config);
    let mut written = 0;
    for (path, rows) in paths.iter().zip(&rows) {
        write_csv(path, rows)?;
        written += rows.len();
    }
    if let Some(dump) = dump_transcript {
        let failed: Vec<&str> = failures.iter().map(|f| f.cell.as_str()).collect();
        let seeds = config.trial_seeds()?;
        if let Some(cell) = cells(config)?.into_iter().find(|c| !failed.contains(&c.label().as_str())) {
            let plan = Arc::new(cell.k.plan(cell.n)?);
            let (_, transcript) = run_trial(config, &cell, &plan, seeds[0], true)?;
            std::fs::write(dump, transcript.unwrap_or_default())?;
        }
    }
    Ok(SweepOutcome { files: paths, rows: written, failures })
}

pub fn read_sum_csv(path: &Path) -> Result<Vec<SumRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatistic {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub k: String,
    pub eps: f64,
    pub mechanism: String,
    pub slope: f64,
    pub intercept: f64,
    pub std_error: f64,
    /// `(n, statistic of max_error)` per distinct `n`.
    pub points: Vec<(usize, f64)>,
}

/// Least squares of `ln y` on `ln x`: `(slope, intercept, slope std error)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 4 {
        return Err(Error::FitUndefined(format!("need at least 4 distinct n, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::FitUndefined("log-log fit needs positive finite data".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let p = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / p;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / p;
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
    let syy: f64 = logs.iter().map(|l| (l.1 - my).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    if sxx <= 1e-12 {
        return Err(Error::FitUndefined("all n are equal".into()));
    }
    if syy <= 1e-24 {
        return Err(Error::FitUndefined("constant data".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = logs.iter().map(|l| (l.1 - intercept - slope * l.0).powi(2)).sum();
    let std_error = (sse / (p - 2.0) / sxx).sqrt();
    Ok((slope, intercept, std_error))
}

/// Fits the exponent of `max_error` against `n` for each `(k, eps,
/// mechanism)` group, in first-seen order.
pub fn fit_scaling(rows: &[SumRow], statistic: FitStatistic) -> Result<Vec<ScalingFit>> {
    type Group<'a> = ((String, f64, String), Vec<&'a SumRow>);
    let mut groups: Vec<Group> = Vec::new();
    for row in rows {
        let key = (row.k.clone(), row.eps, row.mechanism.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    if groups.is_empty() {
        return Err(Error::FitUndefined("no rows".into()));
    }
    groups
        .into_iter()
        .map(|((k, eps, mechanism), members)| {
            let mut ns: Vec<usize> = members.iter().map(|r| r.n).collect();
            ns.sort_unstable();
            ns.dedup();
            let points: Vec<(usize, f64)> = ns
                .iter()
                .map(|&n| {
                    let errs: Vec<f64> = members.iter().filter(|r| r.n == n).map(|r| r.max_error).collect();
                    let stat = match statistic {
                        FitStatistic::Mean => errs.iter().sum::<f64>() / errs.len() as f64,
                        FitStatistic::Median => quantile(&errs, 0.5).expect("nonempty"),
                    };
                    (n, stat)
                })
                .collect();
            let xy: Vec<(f64, f64)> = points.iter().map(|&(n, y)| (n as f64, y)).collect();
            let (slope, intercept, std_error) =
                fit_power_law(&xy).map_err(|e| Error::FitUndefined(format!("k={k} eps={eps} {mechanism}: {e}")))?;
            Ok(ScalingFit { k, eps, mechanism, slope, intercept, std_error, points })
        })
        .collect()
}
