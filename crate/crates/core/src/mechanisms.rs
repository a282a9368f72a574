//! Shuffle-model summation mechanisms.
//!
//! * [`BinaryBlanket`]: randomized response over bits. With probability
//!   `gamma` a user replaces its bit by a fair coin; the server debiases the
//!   shuffled count.
//! * [`VectorFixedPoint`]: each coordinate of an l2-bounded vector is shifted
//!   to `[0, 1]`, stochastically rounded to `2^16` levels and sent through the
//!   same blanket (the coin now picks between level 0 and level `q`).
//!   Coordinates split the budget by simple composition.
//! * [`Oracle`]: the exact batch sum plus centered Gaussian noise of a fixed
//!   variance. Used for large accuracy experiments where only the variance
//!   contract matters.
//!
//! The blanket rate `gamma = min(1, 32 ln(2/delta) / (eps^2 m))` is a
//! conservative instantiation. Its privacy is not proved here; the code only
//! guarantees the unbiasedness and variance contracts below.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::{split_budget, PrivacyParams};
use crate::rng::StreamRng;

/// Constant `C` of the blanket rate.
pub const BLANKET_CONSTANT: f64 = 32.0;

/// Fixed-point resolution of the vector mechanism.
pub const QUANT_LEVELS: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    BinaryBlanket,
    VectorFixedpoint,
    Oracle,
}

impl MechanismKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::BinaryBlanket => "binary-blanket",
            MechanismKind::VectorFixedpoint => "vector-fixedpoint",
            MechanismKind::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary-blanket" | "binary" => Ok(MechanismKind::BinaryBlanket),
            "vector-fixedpoint" | "vector" => Ok(MechanismKind::VectorFixedpoint),
            "oracle" => Ok(MechanismKind::Oracle),
            other => Err(Error::invalid(format!("unknown mechanism kind `{other}`"))),
        }
    }
}

/// One summation instance: encoder family, batch size, budget and dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub batch_size: usize,
    pub budget: PrivacyParams,
    pub dimension: usize,
    /// Per-entry noise variance; only read by the oracle kind.
    pub oracle_variance: f64,
}

impl MechanismSpec {
    pub fn new(kind: MechanismKind, batch_size: usize, budget: PrivacyParams, dimension: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if dimension == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if kind == MechanismKind::BinaryBlanket && dimension != 1 {
            return Err(Error::invalid("the binary mechanism is scalar"));
        }
        Ok(Self { kind, batch_size, budget, dimension, oracle_variance: 0.0 })
    }

    pub fn oracle(batch_size: usize, budget: PrivacyParams, dimension: usize, variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!("oracle variance must be finite and >= 0, got {variance}")));
        }
        let mut spec = Self::new(MechanismKind::Oracle, batch_size, budget, dimension)?;
        spec.oracle_variance = variance;
        Ok(spec)
    }
}

/// Unbiased estimate of a batch sum. Scalars have a single entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SumEstimate {
    pub value: Vec<f64>,
    /// Per-entry variance of the additive noise.
    pub true_variance_bound: f64,
}

impl SumEstimate {
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

/// `gamma = min(1, 32 ln(2/delta) / (eps^2 m))`.
pub fn blanket_rate(m: usize, budget: PrivacyParams) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if budget.delta() <= 0.0 {
        return Err(Error::invalid("the blanket needs delta > 0"));
    }
    let eps = budget.epsilon();
    let rate = BLANKET_CONSTANT * (2.0 / budget.delta()).ln() / (eps * eps * m as f64);
    Ok(rate.min(1.0))
}

/// With probability `gamma` the level is replaced by `q` times a fair coin.
fn blanket_level(level: u64, q: u64, gamma: f64, rng: &mut StreamRng) -> u64 {
    if gamma > 0.0 && rng.random::<f64>() < gamma {
        if rng.random::<bool>() { q } else { 0 }
    } else {
        level
    }
}

pub fn encode_binary(bit: u8, gamma: f64, rng: &mut StreamRng) -> Result<u8> {
    if bit > 1 {
        return Err(Error::invalid(format!("binary input must be 0 or 1, got {bit}")));
    }
    Ok(blanket_level(bit as u64, 1, gamma, rng) as u8)
}

fn debias(observed: f64, m: usize, gamma: f64, scale: f64) -> Result<f64> {
    if gamma >= 1.0 {
        return Err(Error::EstimatorUndefined(format!(
            "blanket rate is 1 for a batch of {m}; the shuffled messages carry no signal"
        )));
    }
    Ok((observed - gamma * m as f64 * scale / 2.0) / (1.0 - gamma))
}

/// Per-user worst-case variance of one blanket message in `[0, 1]` units.
fn blanket_user_variance(gamma: f64, q: u64) -> f64 {
    let quant = if q > 1 { 1.0 / (4.0 * (q * q) as f64) } else { 0.0 };
    (1.0 - gamma) * quant + gamma * (2.0 - gamma) / 4.0
}

fn binary_variance(m: usize, gamma: f64) -> f64 {
    if gamma >= 1.0 {
        return f64::INFINITY;
    }
    m as f64 * blanket_user_variance(gamma, 1) / ((1.0 - gamma) * (1.0 - gamma))
}

fn vector_entry_variance(m: usize, gamma: f64) -> f64 {
    if gamma >= 1.0 {
        return f64::INFINITY;
    }
    4.0 * m as f64 * blanket_user_variance(gamma, QUANT_LEVELS) / ((1.0 - gamma) * (1.0 - gamma))
}

/// Debiased sum of a shuffled bit multiset.
pub fn decode_binary_sum(msgs: &[u8], m: usize, gamma: f64) -> Result<SumEstimate> {
    if msgs.len() != m {
        return Err(Error::MalformedTranscript(format!("expected {m} messages, got {}", msgs.len())));
    }
    let ones = msgs.iter().map(|&b| b as u64).sum::<u64>() as f64;
    Ok(SumEstimate { value: vec![debias(ones, m, gamma, 1.0)?], true_variance_bound: binary_variance(m, gamma) })
}

/// The per-entry variance this implementation attains for `spec`.
pub fn mechanism_variance(spec: &MechanismSpec) -> Result<f64> {
    match spec.kind {
        MechanismKind::Oracle => Ok(spec.oracle_variance),
        MechanismKind::BinaryBlanket => Ok(binary_variance(spec.batch_size, blanket_rate(spec.batch_size, spec.budget)?)),
        MechanismKind::VectorFixedpoint => Ok(vector_entry_variance(spec.batch_size, vector_rate(spec)?)),
    }
}

/// Blanket rate of each coordinate of a vector mechanism.
pub fn vector_rate(spec: &MechanismSpec) -> Result<f64> {
    blanket_rate(spec.batch_size, split_budget(spec.budget, spec.dimension)?)
}

/// Default oracle variance for a per-batch budget: `C ln(1/delta) / eps^2` for
/// scalars and `C ln(d/delta)^2 / eps^2` per entry for `d`-dimensional sums.
pub fn oracle_variance_for(budget: PrivacyParams, dimension: usize, constant: f64) -> Result<f64> {
    if budget.delta() <= 0.0 {
        return Err(Error::invalid("oracle variance needs delta > 0"));
    }
    let eps2 = budget.epsilon() * budget.epsilon();
    let v = if dimension <= 1 {
        (1.0 / budget.delta()).ln() / eps2
    } else {
        (dimension as f64 / budget.delta()).ln().powi(2) / eps2
    };
    Ok(constant * v)
}

/// Exact sum plus independent `N(0, variance)` noise per entry.
pub fn oracle_sum(true_sum: &[f64], variance: f64, rng: &mut StreamRng) -> Result<SumEstimate> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::invalid(format!("variance must be >= 0, got {variance}")));
    }
    let sd = variance.sqrt();
    let value = true_sum
        .iter()
        .map(|&s| {
            let z: f64 = StandardNormal.sample(rng);
            s + sd * z
        })
        .collect();
    Ok(SumEstimate { value, true_variance_bound: variance })
}

/// A summation mechanism as seen by the shuffle runtime.
///
/// `encode` runs on the user with the mechanism's encoder stream, `decode`
/// runs on the server over the shuffled multiset and must not depend on
/// message order.
pub trait SumMechanism: Send {
    type Message: Clone + std::fmt::Debug + Send + Serialize + DeserializeOwned + 'static;

    fn spec(&self) -> &MechanismSpec;

    /// Blanket rate used by the encoder, 0 when there is none.
    fn gamma(&self) -> f64;

    fn encode(&self, value: &[f64], rng: &mut StreamRng) -> Result<Vec<Self::Message>>;

    fn decode(&self, messages: &[Self::Message], rng: &mut StreamRng) -> Result<SumEstimate>;

    fn messages_per_user(&self) -> usize {
        self.spec().dimension
    }
}

#[derive(Debug, Clone)]
pub struct BinaryBlanket {
    spec: MechanismSpec,
    gamma: f64,
}

impl BinaryBlanket {
    pub fn new(spec: MechanismSpec) -> Result<Self> {
        let gamma = blanket_rate(spec.batch_size, spec.budget)?;
        Self::with_rate(spec, gamma)
    }

    pub fn with_rate(spec: MechanismSpec, gamma: f64) -> Result<Self> {
        if spec.kind != MechanismKind::BinaryBlanket {
            return Err(Error::invalid(format!("expected a binary-blanket spec, got {}", spec.kind)));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self { spec, gamma })
    }
}

impl SumMechanism for BinaryBlanket {
    type Message = u8;

    fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn encode(&self, value: &[f64], rng: &mut StreamRng) -> Result<Vec<u8>> {
        let bit = match value {
            [v] if *v == 0.0 => 0,
            [v] if *v == 1.0 => 1,
            _ => return Err(Error::invalid(format!("binary mechanism takes a single bit, got {value:?}"))),
        };
        Ok(vec![encode_binary(bit, self.gamma, rng)?])
    }

    fn decode(&self, messages: &[u8], _rng: &mut StreamRng) -> Result<SumEstimate> {
        decode_binary_sum(messages, self.spec.batch_size, self.gamma)
    }
}

/// Coordinate-tagged fixed-point message: `coord << 32 | level`.
pub fn pack_vector_message(coord: usize, level: u64) -> u64 {
    ((coord as u64) << 32) | level
}

pub fn unpack_vector_message(msg: u64) -> (usize, u64) {
    ((msg >> 32) as usize, msg & 0xffff_ffff)
}

#[derive(Debug, Clone)]
pub struct VectorFixedPoint {
    spec: MechanismSpec,
    gamma: f64,
}

impl VectorFixedPoint {
    pub fn new(spec: MechanismSpec) -> Result<Self> {
        let gamma = vector_rate(&spec)?;
        Self::with_rate(spec, gamma)
    }

    pub fn with_rate(spec: MechanismSpec, gamma: f64) -> Result<Self> {
        if spec.kind != MechanismKind::VectorFixedpoint {
            return Err(Error::invalid(format!("expected a vector-fixedpoint spec, got {}", spec.kind)));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self { spec, gamma })
    }
}

impl SumMechanism for VectorFixedPoint {
    type Message = u64;

    fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn encode(&self, x: &[f64], rng: &mut StreamRng) -> Result<Vec<u64>> {
        if x.len() != self.spec.dimension {
            return Err(Error::invalid(format!("expected {} coordinates, got {}", self.spec.dimension, x.len())));
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm.is_nan() || norm > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("input l2 norm {norm} exceeds 1")));
        }
        let q = QUANT_LEVELS as f64;
        Ok(x.iter()
            .enumerate()
            .map(|(coord, &v)| {
                let scaled = ((v.clamp(-1.0, 1.0) + 1.0) / 2.0) * q;
                let floor = scaled.floor();
                let up = rng.random::<f64>() < scaled - floor;
                let level = (floor as u64 + up as u64).min(QUANT_LEVELS);
                pack_vector_message(coord, blanket_level(level, QUANT_LEVELS, self.gamma, rng))
            })
            .collect())
    }

    fn decode(&self, messages: &[u64], _rng: &mut StreamRng) -> Result<SumEstimate> {
        let d = self.spec.dimension;
        let m = self.spec.batch_size;
        let mut totals = vec![0u64; d];
        let mut counts = vec![0usize; d];
        for &msg in messages {
            let (coord, level) = unpack_vector_message(msg);
            if coord >= d || level > QUANT_LEVELS {
                return Err(Error::MalformedTranscript(format!("bad vector message {msg:#x}")));
            }
            totals[coord] += level;
            counts[coord] += 1;
        }
        if let Some(coord) = counts.iter().position(|&c| c != m) {
            return Err(Error::MalformedTranscript(format!(
                "coordinate {coord} has {} messages, expected {m}",
                counts[coord]
            )));
        }
        let q = QUANT_LEVELS as f64;
        let value = totals
            .iter()
            .map(|&total| Ok(2.0 * debias(total as f64 / q, m, self.gamma, 1.0)? - m as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(SumEstimate { value, true_variance_bound: vector_entry_variance(m, self.gamma) })
    }
}

pub fn encode_vector(x: &[f64], spec: &MechanismSpec, rng: &mut StreamRng) -> Result<Vec<u64>> {
    VectorFixedPoint::new(*spec)?.encode(x, rng)
}

pub fn decode_vector_sum(msgs: &[u64], m: usize, spec: &MechanismSpec) -> Result<SumEstimate> {
    if m != spec.batch_size {
        return Err(Error::invalid(format!("batch size {m} does not match spec {}", spec.batch_size)));
    }
    // decoding draws no randomness
    let mut unused = crate::rng::stream(0, crate::rng::Purpose::Decode, 0);
    VectorFixedPoint::new(*spec)?.decode(msgs, &mut unused)
}

#[derive(Debug, Clone)]
pub struct Oracle {
    spec: MechanismSpec,
}

impl Oracle {
    pub fn new(spec: MechanismSpec) -> Result<Self> {
        if spec.kind != MechanismKind::Oracle {
            return Err(Error::invalid(format!("expected an oracle spec, got {}", spec.kind)));
        }
        Ok(Self { spec })
    }
}

impl SumMechanism for Oracle {
    /// `(coordinate, raw value)`.
    type Message = (u32, f64);

    fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    fn gamma(&self) -> f64 {
        0.0
    }

    fn encode(&self, value: &[f64], _rng: &mut StreamRng) -> Result<Vec<(u32, f64)>> {
        if value.len() != self.spec.dimension {
            return Err(Error::invalid(format!("expected {} coordinates, got {}", self.spec.dimension, value.len())));
        }
        Ok(value.iter().enumerate().map(|(c, &v)| (c as u32, v)).collect())
    }

    fn decode(&self, messages: &[(u32, f64)], rng: &mut StreamRng) -> Result<SumEstimate> {
        let d = self.spec.dimension;
        let mut per_coord: Vec<Vec<f64>> = vec![Vec::with_capacity(self.spec.batch_size); d];
        for &(coord, v) in messages {
            let slot = per_coord
                .get_mut(coord as usize)
                .ok_or_else(|| Error::MalformedTranscript(format!("coordinate {coord} out of range")))?;
            slot.push(v);
        }
        // sorting makes the floating-point sum independent of shuffle order
        let sums: Vec<f64> = per_coord
            .iter_mut()
            .map(|vals| {
                vals.sort_by(f64::total_cmp);
                vals.iter().sum()
            })
            .collect();
        oracle_sum(&sums, self.spec.oracle_variance, rng)
    }
}

/// Upper triangle of a symmetric matrix, row-major: `(0,0), (0,1), .., (1,1), ..`.
pub fn upper_triangle(mat: &DMatrix<f64>) -> Vec<f64> {
    let d = mat.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(mat[(i, j)]);
        }
    }
    out
}

/// Inverse of [`upper_triangle`], mirrored so the result is exactly symmetric.
pub fn from_upper_triangle(entries: &[f64], d: usize) -> Result<DMatrix<f64>> {
    if entries.len() != d * (d + 1) / 2 {
        return Err(Error::invalid(format!("{} entries do not form a {d}x{d} upper triangle", entries.len())));
    }
    let mut mat = DMatrix::zeros(d, d);
    let mut it = entries.iter();
    for i in 0..d {
        for j in i..d {
            let v = *it.next().unwrap();
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    Ok(mat)
}
