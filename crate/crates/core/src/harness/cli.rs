//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::{csv_bytes, fit_scaling, read_sum_csv, run_bandit_sweep, run_sum_sweep, write_hard_input};
use super::{FitStatistic, MechanismTest, SweepConfig, SweepOutcome};
use crate::error::Result;
use crate::hard_inputs::HardDistParams;
use crate::mechanisms::MechanismKind;
use crate::privacy::PrivacyParams;

#[derive(Debug, Parser)]
#[command(name = "csdp", version, about = "Private running sums with concurrent shufflers")]
pub struct Cli {
    /// Base seed; overrides the config file's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write a line-delimited JSON transcript of a representative run.
    #[arg(long, global = true, value_name = "PATH")]
    pub dump_transcript: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimator error sweep over n, k, epsilon and mechanisms.
    SumSweep {
        #[arg(long)]
        config: PathBuf,
        /// Also print log-log fits of max error against n.
        #[arg(long)]
        fit: bool,
    },
    /// Regret sweep of private LinUCB.
    BanditSweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo unbiasedness and variance check of one batch mechanism.
    MechanismTest {
        #[arg(long)]
        kind: MechanismKind,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        oracle_constant: f64,
    },
    /// Sample one stream from the lower-bound family (seeded by `--seed`).
    HardInput {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        prefix_len: usize,
        #[arg(long, default_value_t = 0)]
        prefix_bit: u8,
    },
    /// Fit the error exponent from a sum-sweep CSV.
    FitScaling {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        median: bool,
    },
}

/// Runs a parsed command, printing results to `out`. Returns the process
/// exit code: 0 on success, 2 when some sweep cells failed.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::SumSweep { config, fit } => {
            let config = load(&config, cli.seed)?;
            let outcome = run_sum_sweep(&config, cli.dump_transcript.as_deref())?;
            if fit {
                for path in &outcome.files {
                    print_fits(path, FitStatistic::Mean, out)?;
                }
            }
            report(&outcome, out)
        }
        Command::BanditSweep { config } => {
            let config = load(&config, cli.seed)?;
            report(&run_bandit_sweep(&config)?, out)
        }
        Command::MechanismTest { kind, m, eps, delta, trials, dim, oracle_constant } => {
            let mut test = MechanismTest::new(kind, m, PrivacyParams::new(eps, delta)?, trials);
            test.dimension = dim;
            test.oracle_constant = oracle_constant;
            test.seed = cli.seed.unwrap_or(0);
            let report = test.run()?;
            out.write_all(&csv_bytes(&[report])?)?;
            if let Some(path) = &cli.dump_transcript {
                std::fs::write(path, test.transcript()?)?;
            }
            Ok(0)
        }
        Command::HardInput { n, k, eps, out: path, prefix_len, prefix_bit } => {
            let params = HardDistParams::new(n, k, eps)?.with_prefix(prefix_len, prefix_bit)?;
            let sample = write_hard_input(&params, cli.seed.unwrap_or(0), &path)?;
            writeln!(
                out,
                "wrote {} bits ({} fresh singles, block length {}) to {}",
                sample.stream.len(),
                sample.fresh_positions().len(),
                params.block_len(),
                path.display()
            )?;
            Ok(0)
        }
        Command::FitScaling { csv, median } => {
            print_fits(&csv, if median { FitStatistic::Median } else { FitStatistic::Mean }, out)?;
            Ok(0)
        }
    }
}

fn load(path: &std::path::Path, seed: Option<u64>) -> Result<SweepConfig> {
    let mut config = SweepConfig::load(path)?;
    if let Some(seed) = seed {
        config.reseed(seed)?;
    }
    Ok(config)
}

fn report(outcome: &SweepOutcome, out: &mut dyn Write) -> Result<i32> {
    for file in &outcome.files {
        writeln!(out, "wrote {}", file.display())?;
    }
    writeln!(out, "{} rows", outcome.rows)?;
    for f in &outcome.failures {
        writeln!(out, "cell failed: {}: {}", f.cell, f.error)?;
    }
    Ok(if outcome.failures.is_empty() { 0 } else { 2 })
}

fn print_fits(path: &std::path::Path, statistic: FitStatistic, out: &mut dyn Write) -> Result<()> {
    let rows = read_sum_csv(path)?;
    match fit_scaling(&rows, statistic) {
        Ok(fits) => {
            for f in fits {
                writeln!(
                    out,
                    "{}: k={} eps={} {}: slope {:.4} +/- {:.4}",
                    path.display(),
                    f.k,
                    f.eps,
                    f.mechanism,
                    f.slope,
                    f.std_error
                )?;
            }
        }
        Err(e) => writeln!(out, "{}: {e}", path.display())?,
    }
    Ok(())
}

/// Entry point of the `csdp` binary.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
