//! Sweep configuration files.
//!
//! A config is TOML. Grids are arrays; every grid must be nonempty.
//!
//! ```toml
//! experiment = "sum-sweep"
//! n = [1024, 2048, 4096, 8192]
//! k = [1, 2, "binary"]
//! epsilon = [1.0]
//! delta = [1e-6]
//! mechanism = ["oracle"]
//! trials = 200
//! seed = 7
//! output = "results/sum.csv"
//! families = ["all-ones", "uniform", "hard"]
//! beta = 0.1
//! ```
//!
//! `seeds` may list the per-trial seeds explicitly instead of `trials` and
//! `seed`. Bandit sweeps also read `dimension`, `actions`, `sigma`,
//! `sigma_prime_scale`, `lambda_min`, `alpha_conf` and `trace`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::MechanismConfig;
use crate::mechanisms::MechanismKind;
use crate::plan::TreePlan;
use crate::privacy::PrivacyParams;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SumSweep,
    BanditSweep,
}

/// A `k` grid entry: a level count, or the padded binary tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KChoice {
    Levels(usize),
    Binary,
}

impl KChoice {
    pub fn plan(self, n: usize) -> Result<TreePlan> {
        match self {
            KChoice::Levels(k) => TreePlan::build(n, k),
            KChoice::Binary => TreePlan::binary(n),
        }
    }
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KChoice::Levels(k) => write!(f, "{k}"),
            KChoice::Binary => f.write_str("binary"),
        }
    }
}

impl std::str::FromStr for KChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "binary" {
            return Ok(KChoice::Binary);
        }
        s.parse().map(KChoice::Levels).map_err(|_| Error::Config(format!("k must be an integer or \"binary\", got {s:?}")))
    }
}

impl<'de> Deserialize<'de> for KChoice {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Name(String),
        }
        match Raw::deserialize(de)? {
            Raw::Int(k) => Ok(KChoice::Levels(k)),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for KChoice {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KChoice::Levels(k) => ser.serialize_u64(*k as u64),
            KChoice::Binary => ser.serialize_str("binary"),
        }
    }
}

/// A `mechanism` grid entry. `zero-noise` is the oracle with variance 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismChoice {
    Oracle,
    ZeroNoise,
    BinaryBlanket,
    VectorFixedpoint,
}

impl MechanismChoice {
    pub fn name(self) -> &'static str {
        match self {
            MechanismChoice::Oracle => "oracle",
            MechanismChoice::ZeroNoise => "zero-noise",
            MechanismChoice::BinaryBlanket => "binary-blanket",
            MechanismChoice::VectorFixedpoint => "vector-fixedpoint",
        }
    }

    pub fn config(self, oracle_constant: f64, oracle_variance: Option<f64>) -> MechanismConfig {
        let kind = match self {
            MechanismChoice::ZeroNoise => return MechanismConfig::zero_noise(),
            MechanismChoice::Oracle => MechanismKind::Oracle,
            MechanismChoice::BinaryBlanket => MechanismKind::BinaryBlanket,
            MechanismChoice::VectorFixedpoint => MechanismKind::VectorFixedpoint,
        };
        MechanismConfig { kind, oracle_constant, oracle_variance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFamily {
    AllOnes,
    /// Fair random bits.
    Uniform,
    /// Streams from the lower-bound family for the cell's `(n, k, eps)`.
    Hard,
}

impl InputFamily {
    pub fn name(self) -> &'static str {
        match self {
            InputFamily::AllOnes => "all-ones",
            InputFamily::Uniform => "uniform",
            InputFamily::Hard => "hard",
        }
    }
}

fn default_families() -> Vec<InputFamily> {
    vec![InputFamily::AllOnes, InputFamily::Uniform, InputFamily::Hard]
}

fn default_delta() -> Vec<f64> {
    vec![1e-6]
}

fn default_mechanism() -> Vec<MechanismChoice> {
    vec![MechanismChoice::Oracle]
}

fn default_beta() -> f64 {
    0.1
}

fn one() -> f64 {
    1.0
}

fn default_dimension() -> usize {
    3
}

fn default_actions() -> usize {
    10
}

fn default_sigma() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub n: Vec<usize>,
    pub k: Vec<KChoice>,
    pub epsilon: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    #[serde(default = "default_mechanism")]
    pub mechanism: Vec<MechanismChoice>,
    /// Trials per cell; ignored when `seeds` is given.
    #[serde(default)]
    pub trials: Option<usize>,
    /// Base seed that per-trial seeds derive from.
    #[serde(default)]
    pub seed: u64,
    /// Explicit per-trial seeds.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub output: PathBuf,
    #[serde(default = "default_families")]
    pub families: Vec<InputFamily>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "one")]
    pub oracle_constant: f64,
    #[serde(default)]
    pub oracle_variance: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,

    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_actions")]
    pub actions: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub sigma_prime_scale: f64,
    #[serde(default = "one")]
    pub lambda_min: f64,
    #[serde(default)]
    pub alpha_conf: Option<f64>,
    /// Per-time bandit trace CSV.
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config; a relative `output` or `trace` resolves against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            if config.output.is_relative() {
                config.output = dir.join(&config.output);
            }
            if let Some(trace) = config.trace.as_mut().filter(|t| t.is_relative()) {
                *trace = dir.join(&*trace);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str, len: usize| -> Result<()> {
            if len == 0 {
                return Err(Error::Config(format!("grid `{name}` is empty")));
            }
            Ok(())
        };
        empty("n", self.n.len())?;
        empty("k", self.k.len())?;
        empty("epsilon", self.epsilon.len())?;
        empty("delta", self.delta.len())?;
        empty("mechanism", self.mechanism.len())?;
        if self.experiment == Experiment::SumSweep {
            empty("families", self.families.len())?;
        }
        for &eps in &self.epsilon {
            for &delta in &self.delta {
                PrivacyParams::new(eps, delta).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if let Some(v) = self.oracle_variance {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("oracle_variance must be >= 0, got {v}")));
            }
        }
        let seeds = self.trial_seeds()?;
        if seeds.is_empty() {
            return Err(Error::Config("no trials".into()));
        }
        if seeds.iter().collect::<HashSet<_>>().len() != seeds.len() {
            return Err(Error::Config("trial seeds must be distinct".into()));
        }
        if self.experiment == Experiment::BanditSweep && self.k.contains(&KChoice::Binary) && self.n.iter().any(|&n| n < 3) {
            return Err(Error::Config("binary plans need n >= 3".into()));
        }
        Ok(())
    }

    /// Seeds of the trials in every cell.
    pub fn trial_seeds(&self) -> Result<Vec<u64>> {
        match (&self.seeds, self.trials) {
            (Some(seeds), Some(t)) if t != seeds.len() => {
                Err(Error::Config(format!("trials = {t} but {} seeds listed", seeds.len())))
            }
            (Some(seeds), _) => Ok(seeds.clone()),
            (None, Some(t)) => Ok((0..t as u64).map(|i| rng::derive_seed(self.seed, i)).collect()),
            (None, None) => Err(Error::Config("set `trials` or `seeds`".into())),
        }
    }

    /// Replaces the base seed, dropping any explicit seed list.
    pub fn reseed(&mut self, seed: u64) -> Result<()> {
        if let Some(seeds) = self.seeds.take() {
            self.trials.get_or_insert(seeds.len());
        }
        self.seed = seed;
        self.validate()
    }
}
