//! Adversarial binary streams from the lower-bound family.
//!
//! A stream starts with a constant prefix of at most `rep` bits, then
//! alternates one fresh fair bit with a block of `rep` copies of another
//! fresh fair bit, truncated at length `n`. The constants are
//!
//! ```text
//! c_eps     = e^eps / (e^(2 eps) + 1)
//! rep(n, k) = 1/2 * n^(1/(2k+1)) * c_eps^(2k/(2k+1))
//! big(n, k) = n^((2k-1)/(2k+1)) * c_eps^(2/(2k+1))
//! ```
//!
//! Block lengths use `max(1, floor(rep))`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{process_stream, quantile, MechanismConfig, StreamOptions};
use crate::plan::TreePlan;
use crate::privacy::PrivacyParams;
use crate::rng::{self, Purpose, StreamRng};

pub fn c_eps(epsilon: f64) -> f64 {
    // e^eps / (e^2eps + 1) == 1 / (2 cosh eps), without overflow
    1.0 / (2.0 * epsilon.cosh())
}

pub fn rep(n: f64, k: usize, c: f64) -> f64 {
    let p = 2.0 * k as f64 + 1.0;
    0.5 * n.powf(1.0 / p) * c.powf(2.0 * k as f64 / p)
}

pub fn big(n: f64, k: usize, c: f64) -> f64 {
    let p = 2.0 * k as f64 + 1.0;
    n.powf((2.0 * k as f64 - 1.0) / p) * c.powf(2.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardDistParams {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub c_eps: f64,
    pub rep: f64,
    pub big: f64,
    pub prefix_len: usize,
    pub prefix_bit: u8,
}

impl HardDistParams {
    pub fn new(n: usize, k: usize, epsilon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        let c = c_eps(epsilon);
        Ok(Self {
            n,
            k,
            epsilon,
            c_eps: c,
            rep: rep(n as f64, k, c),
            big: big(n as f64, k, c),
            prefix_len: 0,
            prefix_bit: 0,
        })
    }

    pub fn with_prefix(mut self, len: usize, bit: u8) -> Result<Self> {
        if bit > 1 {
            return Err(Error::invalid(format!("prefix bit must be 0 or 1, got {bit}")));
        }
        if len > self.rep.floor() as usize {
            return Err(Error::invalid(format!("prefix of {len} exceeds floor(rep) = {}", self.rep.floor())));
        }
        self.prefix_len = len;
        self.prefix_bit = bit;
        Ok(self)
    }

    /// Length of each repeated block.
    pub fn block_len(&self) -> usize {
        (self.rep.floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Prefix,
    Single,
    Block,
}

/// A run of equal bits in the generation record. `start` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub len: usize,
    pub bit: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardSample {
    pub params: HardDistParams,
    pub stream: Vec<u8>,
    pub segments: Vec<Segment>,
}

impl HardSample {
    /// Positions of the single fresh bits.
    pub fn fresh_positions(&self) -> Vec<usize> {
        self.segments.iter().filter(|s| s.kind == SegmentKind::Single).map(|s| s.start).collect()
    }

    pub fn as_values(&self) -> Vec<f64> {
        self.stream.iter().map(|&b| b as f64).collect()
    }
}

pub fn sample_hard_stream(params: &HardDistParams, rng: &mut StreamRng) -> HardSample {
    let n = params.n;
    let mut stream = Vec::with_capacity(n);
    let mut segments = Vec::new();
    let mut push = |kind, len: usize, bit: u8, stream: &mut Vec<u8>| {
        let len = len.min(n - stream.len());
        if len > 0 {
            segments.push(Segment { kind, start: stream.len() + 1, len, bit });
            stream.extend(std::iter::repeat_n(bit, len));
        }
    };
    push(SegmentKind::Prefix, params.prefix_len, params.prefix_bit, &mut stream);
    let block = params.block_len();
    while stream.len() < n {
        let bit = rng.random::<bool>() as u8;
        push(SegmentKind::Single, 1, bit, &mut stream);
        let bit = rng.random::<bool>() as u8;
        push(SegmentKind::Block, block, bit, &mut stream);
    }
    HardSample { params: *params, stream, segments }
}

/// Checks a sample against `prefix . (single . block)*` truncated at `n`.
pub fn validate_hard_sample(sample: &HardSample) -> Result<()> {
    let p = &sample.params;
    let fail = |msg: String| Err(Error::invalid(format!("hard sample: {msg}")));
    if sample.stream.len() != p.n {
        return fail(format!("length {} != n = {}", sample.stream.len(), p.n));
    }
    let mut segs = sample.segments.iter().peekable();
    let mut pos = 1;
    if p.prefix_len > 0 {
        match segs.next() {
            Some(s) if s.kind == SegmentKind::Prefix && s.len == p.prefix_len.min(p.n) && s.bit == p.prefix_bit => {}
            other => return fail(format!("expected prefix of {} x {}, got {other:?}", p.prefix_len, p.prefix_bit)),
        }
        pos += p.prefix_len.min(p.n);
    }
    let mut expect = SegmentKind::Single;
    for s in segs {
        let full = if expect == SegmentKind::Single { 1 } else { p.block_len() };
        let truncated = s.start + s.len - 1 == p.n;
        if s.kind != expect || s.start != pos || s.len == 0 || s.len > full || (s.len < full && !truncated) || s.bit > 1 {
            return fail(format!("unexpected segment {s:?} at position {pos}"));
        }
        pos += s.len;
        expect = if expect == SegmentKind::Single { SegmentKind::Block } else { SegmentKind::Single };
    }
    if pos != p.n + 1 {
        return fail(format!("segments cover {} of {} positions", pos - 1, p.n));
    }
    for s in &sample.segments {
        if sample.stream[s.start - 1..s.start - 1 + s.len].iter().any(|&b| b != s.bit) {
            return fail(format!("stream disagrees with segment {s:?}"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub max_errors: Vec<f64>,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

/// Runs the estimator on fresh hard streams and reports max-error quantiles.
pub fn worst_case_probe(
    plan: &Arc<TreePlan>,
    config: MechanismConfig,
    total: PrivacyParams,
    params: &HardDistParams,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if trials < 100 {
        return Err(Error::invalid(format!("need at least 100 trials, got {trials}")));
    }
    if params.n != plan.n() {
        return Err(Error::invalid(format!("params n = {} but plan n = {}", params.n, plan.n())));
    }
    let mut max_errors = Vec::with_capacity(trials);
    for trial in 0..trials {
        let trial_seed = rng::derive_seed(seed, trial as u64);
        let sample = sample_hard_stream(params, &mut rng::stream(trial_seed, Purpose::Hard, 0));
        let run = process_stream(&sample.as_values(), plan, config, total, StreamOptions::seeded(trial_seed))?;
        max_errors.push(run.report.max_abs_error);
    }
    Ok(ProbeReport {
        median: quantile(&max_errors, 0.5)?,
        q90: quantile(&max_errors, 0.9)?,
        max: quantile(&max_errors, 1.0)?,
        max_errors,
    })
}
