//! Online private summation over a batch tree.
//!
//! The server keeps the decoded estimate of every closed node and, whenever a
//! level-1 batch closes, republishes the sum of the estimates in the cover
//! `vstar(t)`. Between closes the last published value is held. The true
//! prefix sums are tracked beside the server for error reporting only; they
//! never reach the server.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mechanisms::{
    oracle_variance_for, BinaryBlanket, MechanismKind, MechanismSpec, Oracle, SumEstimate, SumMechanism,
    VectorFixedPoint,
};
use crate::plan::{PlanNode, TreePlan};
use crate::privacy::{split_budget, PrivacyParams};
use crate::rng::{self, Purpose};
use crate::runtime::{ExecutedBatch, ShuffleRuntime};

/// Which mechanism runs every batch, and how oracle noise is sized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    /// Multiplier on the default oracle variance.
    pub oracle_constant: f64,
    /// Fixed per-entry oracle variance, overriding the budget-derived one.
    pub oracle_variance: Option<f64>,
}

impl MechanismConfig {
    pub fn oracle() -> Self {
        Self { kind: MechanismKind::Oracle, oracle_constant: 1.0, oracle_variance: None }
    }

    pub fn oracle_fixed(variance: f64) -> Self {
        Self { oracle_variance: Some(variance), ..Self::oracle() }
    }

    /// Oracle with variance 0: every node estimate is the exact batch sum.
    pub fn zero_noise() -> Self {
        Self::oracle_fixed(0.0)
    }

    pub fn binary_blanket() -> Self {
        Self { kind: MechanismKind::BinaryBlanket, ..Self::oracle() }
    }

    pub fn vector_fixedpoint() -> Self {
        Self { kind: MechanismKind::VectorFixedpoint, ..Self::oracle() }
    }

    pub fn is_zero_noise(&self) -> bool {
        self.kind == MechanismKind::Oracle && self.oracle_variance == Some(0.0)
    }

    /// Spec of the batch for `node` at the given per-batch budget.
    pub fn spec_for(&self, node: &PlanNode, budget: PrivacyParams, dimension: usize) -> Result<MechanismSpec> {
        match self.kind {
            MechanismKind::Oracle => {
                let v = match self.oracle_variance {
                    Some(v) => v,
                    None => oracle_variance_for(budget, dimension, self.oracle_constant)?,
                };
                MechanismSpec::oracle(node.len(), budget, dimension, v)
            }
            kind => MechanismSpec::new(kind, node.len(), budget, dimension),
        }
    }
}

/// Mechanisms the estimator can instantiate per batch.
pub trait BuildMechanism: SumMechanism + Sized {
    fn build(spec: MechanismSpec) -> Result<Self>;
}

impl BuildMechanism for BinaryBlanket {
    fn build(spec: MechanismSpec) -> Result<Self> {
        BinaryBlanket::new(spec)
    }
}

impl BuildMechanism for VectorFixedPoint {
    fn build(spec: MechanismSpec) -> Result<Self> {
        VectorFixedPoint::new(spec)
    }
}

impl BuildMechanism for Oracle {
    fn build(spec: MechanismSpec) -> Result<Self> {
        Oracle::new(spec)
    }
}

/// The server side: decoded node estimates and the published sum.
#[derive(Debug, Clone)]
pub struct CstaServer {
    plan: Arc<TreePlan>,
    dimension: usize,
    seed: u64,
    node_estimates: Vec<Option<SumEstimate>>,
    output: Vec<f64>,
    contributors: Vec<usize>,
}

impl CstaServer {
    pub fn new(plan: Arc<TreePlan>, dimension: usize, seed: u64) -> Self {
        let nodes = plan.nodes().len();
        Self { plan, dimension, seed, node_estimates: vec![None; nodes], output: vec![0.0; dimension], contributors: Vec::new() }
    }

    /// Decodes an executed batch and stores its estimate.
    pub fn absorb<Mech: SumMechanism>(&mut self, batch: &ExecutedBatch<Mech>) -> Result<()> {
        let mut rng = rng::stream(self.seed, Purpose::Decode, batch.node.id as u64);
        let estimate = batch.mechanism.decode(&batch.messages, &mut rng)?;
        if estimate.value.len() != self.dimension || estimate.value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("node {} decoded to {:?}", batch.node.id, estimate.value)));
        }
        self.node_estimates[batch.node.id] = Some(estimate);
        Ok(())
    }

    /// Republishes `sum_{v in vstar(t)} S_v`.
    pub fn publish(&mut self, t: usize) -> Result<()> {
        let cover = self.plan.vstar(t);
        let mut sum = vec![0.0; self.dimension];
        for &id in &cover.nodes {
            let est = self.node_estimates[id]
                .as_ref()
                .ok_or_else(|| Error::ProtocolViolation(format!("node {id} is in the cover at {t} but has no estimate")))?;
            for (acc, v) in sum.iter_mut().zip(&est.value) {
                *acc += v;
            }
        }
        self.output = sum;
        self.contributors = cover.nodes;
        Ok(())
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Node ids whose noise enters the current output.
    pub fn contributors(&self) -> &[usize] {
        &self.contributors
    }

    pub fn node_estimate(&self, id: usize) -> Option<&SumEstimate> {
        self.node_estimates[id].as_ref()
    }

    /// Sum of the contracted variances of the current contributors.
    pub fn output_variance_bound(&self) -> f64 {
        self.contributors
            .iter()
            .filter_map(|&id| self.node_estimates[id].as_ref())
            .map(|e| e.true_variance_bound)
            .sum()
    }
}

/// Users, shufflers and server wired together for one stream.
pub struct StreamingSum<Mech: BuildMechanism> {
    runtime: ShuffleRuntime<Mech>,
    server: CstaServer,
    config: MechanismConfig,
    batch_budget: PrivacyParams,
    dimension: usize,
    t: usize,
}

impl<Mech: BuildMechanism> StreamingSum<Mech> {
    /// `batch_budget` is what each batch spends, normally `split_budget(total, k)`.
    pub fn new(
        plan: Arc<TreePlan>,
        config: MechanismConfig,
        batch_budget: PrivacyParams,
        dimension: usize,
        seed: u64,
        record_transcript: bool,
    ) -> Self {
        let mut runtime = ShuffleRuntime::new(plan.clone(), seed);
        if record_transcript {
            runtime = runtime.record_transcript();
        }
        Self { runtime, server: CstaServer::new(plan, dimension, seed), config, batch_budget, dimension, t: 0 }
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Feeds the next user's value. Returns true when the output changed.
    pub fn push(&mut self, value: &[f64]) -> Result<bool> {
        if value.len() != self.dimension {
            return Err(Error::invalid(format!("expected {} entries, got {}", self.dimension, value.len())));
        }
        let t = self.t + 1;
        let (config, budget, dim) = (self.config, self.batch_budget, self.dimension);
        let executed = self.runtime.step(t, value, |node| Mech::build(config.spec_for(node, budget, dim)?))?;
        self.t = t;
        for batch in &executed {
            self.server.absorb(batch)?;
        }
        let closed_level_one = executed.iter().any(|b| b.node.level == 1);
        if closed_level_one {
            self.server.publish(t)?;
        }
        Ok(closed_level_one)
    }

    /// Runs phantom zero-valued users up to the plan horizon.
    pub fn finish(&mut self) -> Result<()> {
        let zero = vec![0.0; self.dimension];
        while self.t < self.runtime.plan().horizon() {
            self.push(&zero)?;
        }
        Ok(())
    }

    pub fn estimate(&self) -> &[f64] {
        self.server.output()
    }

    pub fn server(&self) -> &CstaServer {
        &self.server
    }

    pub fn runtime(&self) -> &ShuffleRuntime<Mech> {
        &self.runtime
    }

    pub fn transcript_jsonl(&self) -> Result<Option<Vec<u8>>> {
        self.runtime.transcript().map(|t| t.to_jsonl()).transpose()
    }
}

/// Kind-erased [`StreamingSum`].
pub enum AnyStreamingSum {
    Binary(StreamingSum<BinaryBlanket>),
    Vector(StreamingSum<VectorFixedPoint>),
    Oracle(StreamingSum<Oracle>),
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            AnyStreamingSum::Binary($s) => $body,
            AnyStreamingSum::Vector($s) => $body,
            AnyStreamingSum::Oracle($s) => $body,
        }
    };
}

impl AnyStreamingSum {
    pub fn new(
        plan: Arc<TreePlan>,
        config: MechanismConfig,
        batch_budget: PrivacyParams,
        dimension: usize,
        seed: u64,
        record_transcript: bool,
    ) -> Self {
        match config.kind {
            MechanismKind::BinaryBlanket => {
                Self::Binary(StreamingSum::new(plan, config, batch_budget, dimension, seed, record_transcript))
            }
            MechanismKind::VectorFixedpoint => {
                Self::Vector(StreamingSum::new(plan, config, batch_budget, dimension, seed, record_transcript))
            }
            MechanismKind::Oracle => {
                Self::Oracle(StreamingSum::new(plan, config, batch_budget, dimension, seed, record_transcript))
            }
        }
    }

    pub fn push(&mut self, value: &[f64]) -> Result<bool> {
        dispatch!(self, s => s.push(value))
    }

    pub fn finish(&mut self) -> Result<()> {
        dispatch!(self, s => s.finish())
    }

    pub fn estimate(&self) -> &[f64] {
        dispatch!(self, s => s.estimate())
    }

    pub fn server(&self) -> &CstaServer {
        dispatch!(self, s => s.server())
    }

    pub fn time(&self) -> usize {
        dispatch!(self, s => s.time())
    }

    pub fn transcript_jsonl(&self) -> Result<Option<Vec<u8>>> {
        dispatch!(self, s => s.transcript_jsonl())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub max_abs_error: f64,
    pub per_time_error: Vec<f64>,
}

/// Everything one stream run produced.
#[derive(Debug, Clone)]
pub struct RunningEstimate {
    pub dimension: usize,
    /// Published estimate at `t = 1..=n`, `dimension` entries per time.
    pub outputs: Vec<f64>,
    /// Exact prefix sums, same layout as `outputs`.
    pub true_prefix: Vec<f64>,
    /// Number of independent noise terms in each published output.
    pub noise_terms: Vec<usize>,
    pub report: ErrorReport,
    pub transcript: Option<Vec<u8>>,
}

impl RunningEstimate {
    pub fn output(&self, t: usize) -> &[f64] {
        &self.outputs[(t - 1) * self.dimension..t * self.dimension]
    }

    pub fn truth(&self, t: usize) -> &[f64] {
        &self.true_prefix[(t - 1) * self.dimension..t * self.dimension]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StreamOptions {
    pub seed: u64,
    pub record_transcript: bool,
}

impl StreamOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, record_transcript: false }
    }
}

/// Runs a scalar stream with values in `[0, 1]` (bits for the binary kind).
pub fn process_stream(
    values: &[f64],
    plan: &Arc<TreePlan>,
    config: MechanismConfig,
    total: PrivacyParams,
    options: StreamOptions,
) -> Result<RunningEstimate> {
    if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("stream value {bad} outside [0, 1]")));
    }
    run_flat(values, 1, plan, config, total, options)
}

/// Runs a vector stream; each value needs l2 norm at most 1.
pub fn process_vector_stream(
    values: &[Vec<f64>],
    plan: &Arc<TreePlan>,
    config: MechanismConfig,
    total: PrivacyParams,
    options: StreamOptions,
) -> Result<RunningEstimate> {
    let dimension = values.first().map_or(1, Vec::len);
    let mut flat = Vec::with_capacity(values.len() * dimension);
    for v in values {
        if v.len() != dimension {
            return Err(Error::invalid("stream vectors must share one dimension"));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm.is_nan() || norm > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("stream vector norm {norm} exceeds 1")));
        }
        flat.extend_from_slice(v);
    }
    run_flat(&flat, dimension, plan, config, total, options)
}

fn run_flat(
    flat: &[f64],
    dimension: usize,
    plan: &Arc<TreePlan>,
    config: MechanismConfig,
    total: PrivacyParams,
    options: StreamOptions,
) -> Result<RunningEstimate> {
    let n = plan.n();
    if flat.len() != n * dimension {
        return Err(Error::invalid(format!("plan has {n} users, stream has {}", flat.len() / dimension.max(1))));
    }
    let batch_budget = split_budget(total, plan.k())?;
    let mut sum = AnyStreamingSum::new(plan.clone(), config, batch_budget, dimension, options.seed, options.record_transcript);

    let mut outputs = Vec::with_capacity(flat.len());
    let mut true_prefix = Vec::with_capacity(flat.len());
    let mut noise_terms = Vec::with_capacity(n);
    let mut per_time_error = Vec::with_capacity(n);
    let mut running = vec![0.0; dimension];
    for value in flat.chunks_exact(dimension) {
        sum.push(value)?;
        let out = sum.estimate();
        let mut err: f64 = 0.0;
        for ((acc, v), o) in running.iter_mut().zip(value).zip(out) {
            *acc += v;
            err = err.max((o - *acc).abs());
        }
        outputs.extend_from_slice(out);
        true_prefix.extend_from_slice(&running);
        noise_terms.push(sum.server().contributors().len());
        per_time_error.push(err);
    }
    sum.finish()?;
    let max_abs_error = per_time_error.iter().copied().fold(0.0, f64::max);
    Ok(RunningEstimate {
        dimension,
        outputs,
        true_prefix,
        noise_terms,
        report: ErrorReport { max_abs_error, per_time_error },
        transcript: sum.transcript_jsonl()?,
    })
}

/// Empirical `(1 - beta)` quantile (nearest rank) of the runs' max errors.
pub fn error_profile(runs: &[ErrorReport], beta: f64) -> Result<f64> {
    if runs.len() < 100 {
        return Err(Error::invalid(format!("need at least 100 runs, got {}", runs.len())));
    }
    let errors: Vec<f64> = runs.iter().map(|r| r.max_abs_error).collect();
    quantile(&errors, 1.0 - beta)
}

/// Nearest-rank quantile.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile {q} of {} values", values.len())));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}
