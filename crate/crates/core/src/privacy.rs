//! Budget arithmetic and participation auditing.
//!
//! Each user joins one batch per shuffler level, so a plan with `k` levels
//! runs every batch at `(eps/k, delta/k)` and simple composition gives the
//! total `(eps, delta)` guarantee.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::TreePlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// `(eps/k, delta/k)`.
pub fn split_budget(total: PrivacyParams, k: usize) -> Result<PrivacyParams> {
    if k == 0 {
        return Err(Error::invalid("cannot split a budget over k = 0 mechanisms"));
    }
    let k = k as f64;
    Ok(PrivacyParams { epsilon: total.epsilon / k, delta: total.delta / k })
}

/// How a per-user total is reported. The mechanisms always run at the
/// simple-composition split; `Advanced` only tightens the reported bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Composition {
    #[default]
    Simple,
    /// Advanced composition with an extra failure probability `delta_slack`.
    Advanced { delta_slack: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationReport {
    /// Entry `i` is the number of batches user `i + 1` joins.
    pub per_user_mechanism_count: Vec<usize>,
    pub max_count: usize,
    pub per_mechanism_budget: PrivacyParams,
}

impl ParticipationReport {
    pub fn count(&self, user: usize) -> usize {
        self.per_user_mechanism_count[user - 1]
    }

    /// Worst-case per-user budget spent across all batches.
    pub fn accounted_budget(&self, mode: Composition) -> (f64, f64) {
        let count = self.max_count as f64;
        let eps = self.per_mechanism_budget.epsilon;
        let delta = self.per_mechanism_budget.delta;
        match mode {
            Composition::Simple => (count * eps, count * delta),
            Composition::Advanced { delta_slack } => {
                let adv = (2.0 * count * (1.0 / delta_slack).ln()).sqrt() * eps
                    + count * eps * eps.exp_m1();
                (adv.min(count * eps), count * delta + delta_slack)
            }
        }
    }
}

/// Counts, for every real user, the internal nodes whose range contains it.
/// Every batch is charged `split_budget(total, plan.k())`.
pub fn audit_participation(plan: &TreePlan, total: PrivacyParams) -> Result<ParticipationReport> {
    let mut counts = vec![0usize; plan.n()];
    for node in plan.nodes() {
        let hi = node.end.min(plan.n());
        for user in node.start..=hi {
            counts[user - 1] += 1;
        }
    }
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let per_mechanism_budget = split_budget(total, plan.k().max(1))?;
    Ok(ParticipationReport { per_user_mechanism_count: counts, max_count, per_mechanism_budget })
}
