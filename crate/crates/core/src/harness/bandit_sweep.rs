//! Regret sweeps of the private LinUCB.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Experiment, KChoice, MechanismChoice, SweepConfig};
use super::{pool, write_csv, CellFailure, SweepOutcome};
use crate::bandit::{run_bandit, BanditConfig, BanditInstance, RegretTrace};
use crate::error::{Error, Result};
use crate::privacy::PrivacyParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditRow {
    pub n: usize,
    pub k: String,
    pub eps: f64,
    pub mechanism: String,
    pub seed: u64,
    pub sigma_prime: f64,
    pub lambda: f64,
    pub final_regret: f64,
}

impl super::CsvRow for BanditRow {
    const HEADER: &'static [&'static str] = &["n", "k", "eps", "mechanism", "seed", "sigma_prime", "lambda", "final_regret"];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub run_id: usize,
    pub t: usize,
    pub action: usize,
    pub reward: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

impl super::CsvRow for TraceRow {
    const HEADER: &'static [&'static str] = &["run_id", "t", "action", "reward", "inst_regret", "cum_regret"];
}

#[derive(Debug, Clone)]
struct Cell {
    n: usize,
    k: KChoice,
    eps: f64,
    budget: PrivacyParams,
    mechanism: MechanismChoice,
}

impl Cell {
    fn label(&self) -> String {
        format!("n={} k={} eps={} delta={} mechanism={}", self.n, self.k, self.eps, self.budget.delta(), self.mechanism.name())
    }

    fn bandit_config(&self, sweep: &SweepConfig) -> BanditConfig {
        let mechanism = self.mechanism.config(sweep.oracle_constant, sweep.oracle_variance);
        let (k, binary_plan) = match self.k {
            KChoice::Levels(k) => (k, false),
            KChoice::Binary => (0, true),
        };
        let mut c = BanditConfig::new(self.n, k, self.budget, mechanism);
        c.binary_plan = binary_plan;
        c.alpha_conf = sweep.alpha_conf;
        c.sigma_prime_scale = sweep.sigma_prime_scale;
        c.lambda_min = sweep.lambda_min;
        c
    }
}

/// The instance every run with this seed uses, so runs that differ only in
/// `k`, `eps` or the mechanism share contexts and reward noise.
pub fn sweep_instance(config: &SweepConfig, seed: u64) -> Result<BanditInstance> {
    BanditInstance::random(config.dimension, config.actions, config.sigma, seed)
}

/// Runs every `(cell, seed)` and returns summary rows, per-run traces, and
/// failed cells, all in cell order.
pub fn collect_bandit_sweep(config: &SweepConfig) -> Result<(Vec<BanditRow>, Vec<RegretTrace>, Vec<CellFailure>)> {
    config.validate()?;
    if config.experiment != Experiment::BanditSweep {
        return Err(Error::Config("expected experiment = \"bandit-sweep\"".into()));
    }
    let seeds = config.trial_seeds()?;
    let mut cells = Vec::new();
    for &n in &config.n {
        for &k in &config.k {
            for &eps in &config.epsilon {
                for &delta in &config.delta {
                    for &mechanism in &config.mechanism {
                        cells.push(Cell { n, k, eps, budget: PrivacyParams::new(eps, delta)?, mechanism });
                    }
                }
            }
        }
    }
    let work: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..seeds.len()).map(move |s| (c, s))).collect();
    let results: Vec<Result<RegretTrace>> = pool(config.workers)?.install(|| {
        work.par_iter()
            .map(|&(c, s)| {
                let instance = sweep_instance(config, seeds[s])?;
                run_bandit(&instance, &cells[c].bandit_config(config), seeds[s])
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    let mut results = results.into_iter();
    for cell in &cells {
        let runs: Vec<Result<RegretTrace>> = results.by_ref().take(seeds.len()).collect();
        let runs: Result<Vec<RegretTrace>> = runs.into_iter().collect();
        match runs {
            Ok(runs) => {
                for (trace, &seed) in runs.into_iter().zip(&seeds) {
                    rows.push(BanditRow {
                        n: cell.n,
                        k: cell.k.to_string(),
                        eps: cell.eps,
                        mechanism: cell.mechanism.name().to_string(),
                        seed,
                        sigma_prime: trace.calibration.sigma_prime,
                        lambda: trace.calibration.lambda,
                        final_regret: trace.final_regret,
                    });
                    traces.push(trace);
                }
            }
            Err(e) => failures.push(CellFailure { cell: cell.label(), error: e.to_string() }),
        }
    }
    Ok((rows, traces, failures))
}

/// Runs the sweep, writes the summary CSV and, if configured, the per-time
/// trace CSV keyed by `run_id` (the summary row index).
pub fn run_bandit_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    let (rows, traces, failures) = collect_bandit_sweep(config)?;
    write_csv(&config.output, &rows)?;
    let mut files = vec![config.output.clone()];
    if let Some(path) = &config.trace {
        let trace_rows: Vec<TraceRow> = traces
            .iter()
            .enumerate()
            .flat_map(|(run_id, tr)| {
                tr.steps.iter().map(move |s| TraceRow {
                    run_id,
                    t: s.t,
                    action: s.action,
                    reward: s.reward,
                    inst_regret: s.inst_regret,
                    cum_regret: s.cum_regret,
                })
            })
            .collect();
        write_csv(path, &trace_rows)?;
        files.push(path.clone());
    }
    Ok(SweepOutcome { files, rows: rows.len(), failures })
}
