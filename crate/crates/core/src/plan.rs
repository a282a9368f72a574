//! Batch trees for `k` concurrent shufflers.
//!
//! Leaves are users `1..=n` in arrival order. Every internal node below the
//! root is one shuffle batch covering a contiguous range of users; all nodes of
//! level `l` run on shuffler slot `l`. Level 1 groups `d_low` leaves, higher
//! levels group `d` children. The root is never given a mechanism.
//!
//! Two shapes are supported:
//!
//! * **general**: `d_low = ceil(n^(1/(2k+1)))`, `d = ceil((n/d_low)^(1/k))`.
//!   The last node of each level may be ragged so that exactly `n` leaves exist.
//! * **binary**: `d = d_low = 2`, the horizon is padded to the next power of
//!   two with phantom users who submit 0, and `k = log2(padded) - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    General,
    Binary,
}

/// One shuffle batch. `start` is the time the batch opens and `end` the time
/// it closes (both inclusive, 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: usize,
    pub level: usize,
    pub start: usize,
    pub end: usize,
}

impl PlanNode {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn open_time(&self) -> usize {
        self.start
    }

    pub fn close_time(&self) -> usize {
        self.end
    }
}

/// The closed nodes whose estimates form the published sum at some time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeEstimateSet {
    /// Node ids ordered by range start.
    pub nodes: Vec<usize>,
    /// Last user covered by `nodes`; 0 when empty.
    pub covered: usize,
}

impl NodeEstimateSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Activations and executions at one time step, in slot order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimeSchedule {
    pub t: usize,
    pub activations: Vec<usize>,
    pub executions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreePlan {
    n: usize,
    horizon: usize,
    k: usize,
    d: usize,
    d_low: usize,
    mode: PlanMode,
    nodes: Vec<PlanNode>,
    #[serde(skip)]
    by_start: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawPlan {
    n: usize,
    horizon: usize,
    k: usize,
    d: usize,
    d_low: usize,
    mode: PlanMode,
    nodes: Vec<PlanNode>,
}

impl<'de> Deserialize<'de> for TreePlan {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPlan::deserialize(de)?;
        TreePlan::from_nodes(raw.n, raw.horizon, raw.k, raw.d, raw.d_low, raw.mode, raw.nodes)
            .map_err(serde::de::Error::custom)
    }
}

/// Smallest `r >= 1` with `r^p >= x`, i.e. `ceil(x^(1/p))` without rounding error.
fn ceil_root(x: u128, p: u32) -> usize {
    let mut r: u128 = ((x as f64).powf(1.0 / p as f64).floor() as u128).max(1);
    while r > 1 && pow_at_least(r - 1, p, x) {
        r -= 1;
    }
    while !pow_at_least(r, p, x) {
        r += 1;
    }
    r as usize
}

fn pow_at_least(base: u128, p: u32, x: u128) -> bool {
    base.checked_pow(p).is_none_or(|v| v >= x)
}

fn ceil_log2(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

impl TreePlan {
    /// General-mode plan for `n` users and `k` shufflers.
    pub fn build(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k = 0: at least one shuffler is required"));
        }
        if n < 2 {
            return Err(Error::invalid(format!("n = {n}: need at least 2 users")));
        }
        let max_k = ceil_log2(n) - 1;
        if k > max_k {
            return Err(Error::invalid(format!(
                "k = {k} exceeds ceil(log2 n) - 1 = {max_k} for n = {n}"
            )));
        }
        let d_low = ceil_root(n as u128, 2 * k as u32 + 1);
        // smallest d with d^k * d_low >= n
        let d = ceil_root((n as u128).div_ceil(d_low as u128), k as u32).max(2);
        let nodes = Self::grow(n, k, d, d_low);
        Self::from_nodes(n, n, k, d, d_low, PlanMode::General, nodes)
    }

    /// Binary-mode plan: degree 2 everywhere, horizon padded to a power of two.
    pub fn binary(n: usize) -> Result<Self> {
        let horizon = n.next_power_of_two();
        let levels = horizon.trailing_zeros() as usize;
        if n < 3 {
            return Err(Error::invalid(format!(
                "binary plan for n = {n} would have k = {} shufflers",
                levels.saturating_sub(1)
            )));
        }
        let k = levels - 1;
        let nodes = Self::grow(horizon, k, 2, 2);
        Self::from_nodes(n, horizon, k, 2, 2, PlanMode::Binary, nodes)
    }

    fn grow(horizon: usize, k: usize, d: usize, d_low: usize) -> Vec<PlanNode> {
        let mut nodes = Vec::new();
        let mut prev: Vec<(usize, usize)> = (1..=horizon)
            .step_by(d_low)
            .map(|s| (s, (s + d_low - 1).min(horizon)))
            .collect();
        for level in 1..=k {
            if level > 1 {
                prev = prev.chunks(d).map(|c| (c[0].0, c[c.len() - 1].1)).collect();
            }
            for &(start, end) in &prev {
                nodes.push(PlanNode { id: nodes.len(), level, start, end });
            }
        }
        nodes
    }

    /// Assembles a plan from explicit nodes, checking every structural invariant.
    pub fn from_nodes(
        n: usize,
        horizon: usize,
        k: usize,
        d: usize,
        d_low: usize,
        mode: PlanMode,
        nodes: Vec<PlanNode>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::invalid(format!("malformed plan: {msg}")));
        if horizon < n || d_low == 0 || (k > 0 && d < 2) {
            return bad(format!("n={n} horizon={horizon} d={d} d_low={d_low}"));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return bad(format!("node ids must be 0..len, found {} at {i}", node.id));
            }
            if node.level == 0 || node.level > k || node.start == 0 || node.start > node.end || node.end > horizon {
                return bad(format!("node {i} out of range: {node:?}"));
            }
        }
        let mut lower: Vec<(usize, usize)> = Vec::new();
        for level in 1..=k {
            let mut row: Vec<&PlanNode> = nodes.iter().filter(|v| v.level == level).collect();
            row.sort_by_key(|v| v.start);
            let mut cursor = 0;
            for v in &row {
                if v.start != cursor + 1 {
                    return bad(format!("level {level} does not partition 1..{horizon} at {}", v.start));
                }
                cursor = v.end;
            }
            if cursor != horizon {
                return bad(format!("level {level} stops at {cursor}, horizon is {horizon}"));
            }
            if level == 1 {
                let last = row.len() - 1;
                for (j, v) in row.iter().enumerate() {
                    if v.len() > d_low || (j < last && v.len() != d_low) {
                        return bad(format!("level-1 node {} has {} leaves, d_low = {d_low}", v.id, v.len()));
                    }
                }
            } else {
                for v in &row {
                    let first = lower.iter().position(|&(s, _)| s == v.start);
                    let last = lower.iter().position(|&(_, e)| e == v.end);
                    match (first, last) {
                        (Some(a), Some(b)) if b >= a && b - a < d => {}
                        _ => return bad(format!("node {} is not a union of at most {d} children", v.id)),
                    }
                }
            }
            lower = row.iter().map(|v| (v.start, v.end)).collect();
        }

        let mut by_start = vec![Vec::new(); horizon + 2];
        for v in &nodes {
            by_start[v.start].push(v.id);
        }
        for ids in &mut by_start {
            ids.sort_by_key(|&id| std::cmp::Reverse(nodes[id].level));
        }
        Ok(TreePlan { n, horizon, k, d, d_low, mode, nodes, by_start })
    }

    /// Number of real users.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of time steps the runtime must run for every node to close
    /// (`n`, or the padded power of two in binary mode).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_low(&self) -> usize {
        self.d_low
    }

    pub fn mode(&self) -> PlanMode {
        self.mode
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &PlanNode {
        &self.nodes[id]
    }

    pub fn level_nodes(&self, level: usize) -> impl Iterator<Item = &PlanNode> {
        self.nodes.iter().filter(move |v| v.level == level)
    }

    /// Finds the node with exactly this range at this level.
    pub fn find(&self, level: usize, start: usize, end: usize) -> Option<&PlanNode> {
        self.by_start
            .get(start)?
            .iter()
            .map(|&id| &self.nodes[id])
            .find(|v| v.level == level && v.end == end)
    }

    /// The estimate set at time `t`: a greedy cover of the closed prefix by
    /// maximal closed nodes. From the cursor, always take the highest-level
    /// node that starts there and has closed by `t`.
    pub fn vstar(&self, t: usize) -> NodeEstimateSet {
        let mut set = NodeEstimateSet::default();
        let t = t.min(self.horizon);
        while set.covered < t {
            let next = self.by_start[set.covered + 1]
                .iter()
                .copied()
                .find(|&id| self.nodes[id].end <= t);
            match next {
                Some(id) => {
                    set.nodes.push(id);
                    set.covered = self.nodes[id].end;
                }
                None => break,
            }
        }
        set
    }

    /// Last user whose level-1 batch has closed by time `t`.
    pub fn closed_prefix(&self, t: usize) -> usize {
        self.vstar(t).covered
    }

    /// Per-time activations and executions for `t = 1..=horizon`.
    pub fn schedule(&self) -> Vec<TimeSchedule> {
        let mut out: Vec<TimeSchedule> = (1..=self.horizon)
            .map(|t| TimeSchedule { t, ..Default::default() })
            .collect();
        let mut by_level: Vec<&PlanNode> = self.nodes.iter().collect();
        by_level.sort_by_key(|v| (v.level, v.start));
        for v in by_level {
            out[v.start - 1].activations.push(v.id);
            out[v.end - 1].executions.push(v.id);
        }
        out
    }

    /// Largest estimate set over `t = 1..=n`.
    pub fn max_vstar_len(&self) -> usize {
        (1..=self.n).map(|t| self.vstar(t).len()).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
