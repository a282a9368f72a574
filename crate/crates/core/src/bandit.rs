//! Shuffle-private LinUCB.
//!
//! Every user contributes `x_t y_t` and the upper triangle of `x_t x_t^T` to
//! two private running sums that share one batch tree. Whenever a level-1
//! batch closes the server rebuilds `V_t = V'_t + lambda I`, repairs it to be
//! positive definite with every eigenvalue at least `lambda / 2`, and
//! publishes `theta_hat = V_t^-1 u_t`. Users pick actions from the last
//! published state only.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{AnyStreamingSum, MechanismConfig};
use crate::mechanisms::{from_upper_triangle, mechanism_variance, upper_triangle};
use crate::plan::TreePlan;
use crate::privacy::{split_budget, PrivacyParams};
use crate::rng::{self, Purpose, StreamRng};

/// Feature vectors of every action at one time: `context[a]` is `phi(c, a)`.
pub type Context = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextSource {
    /// The same features every round.
    Fixed(Context),
    /// A script of contexts, cycled.
    Scripted(Vec<Context>),
    /// Fresh unit-norm features with nonnegative entries every round.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    pub theta_star: Vec<f64>,
    pub num_actions: usize,
    pub contexts: ContextSource,
    /// Standard deviation of the Gaussian reward noise.
    pub sigma: f64,
}

impl BanditInstance {
    /// Random unit `theta*` in the positive orthant with random contexts, so
    /// mean rewards lie in `[0, 1]`.
    pub fn random(dimension: usize, num_actions: usize, sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Purpose::Context, u64::MAX);
        let theta_star = positive_unit(dimension, &mut rng);
        let inst = Self { theta_star, num_actions, contexts: ContextSource::Random, sigma };
        inst.validate()?;
        Ok(inst)
    }

    pub fn dimension(&self) -> usize {
        self.theta_star.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 || self.num_actions == 0 {
            return Err(Error::invalid("need at least one feature and one action"));
        }
        if norm(&self.theta_star) > 1.0 + 1e-9 {
            return Err(Error::invalid("theta* must have l2 norm at most 1"));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(Error::invalid("sigma must be >= 0"));
        }
        let check = |ctx: &Context| -> Result<()> {
            if ctx.len() != self.num_actions || ctx.iter().any(|f| f.len() != d || norm(f) > 1.0 + 1e-9) {
                return Err(Error::invalid(format!("context must hold {} features of dimension {d} and norm <= 1", self.num_actions)));
            }
            Ok(())
        };
        match &self.contexts {
            ContextSource::Fixed(ctx) => check(ctx),
            ContextSource::Scripted(script) if script.is_empty() => Err(Error::invalid("empty context script")),
            ContextSource::Scripted(script) => script.iter().try_for_each(check),
            ContextSource::Random => Ok(()),
        }
    }

    fn context_at(&self, t: usize, rng: &mut StreamRng) -> Context {
        match &self.contexts {
            ContextSource::Fixed(ctx) => ctx.clone(),
            ContextSource::Scripted(script) => script[(t - 1) % script.len()].clone(),
            ContextSource::Random => (0..self.num_actions).map(|_| positive_unit(self.dimension(), rng)).collect(),
        }
    }

    pub fn mean_reward(&self, features: &[f64]) -> f64 {
        dot(&self.theta_star, features)
    }
}

fn positive_unit(d: usize, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).map(|x: f64| x.abs()).collect();
        let len = norm(&v);
        if len > 1e-12 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `sigma sqrt(2 ln(2/alpha) + d ln(3 + 2t/(d lambda))) + sqrt(3 lambda/2) + sqrt(lambda/2)`.
pub fn beta(t: usize, sigma: f64, d: usize, lambda: f64, alpha_conf: f64) -> f64 {
    let d = d as f64;
    let inner = 2.0 * (2.0 / alpha_conf).ln() + d * (3.0 + 2.0 * t as f64 / (d * lambda)).ln();
    sigma * inner.sqrt() + (1.5 * lambda).sqrt() + (0.5 * lambda).sqrt()
}

/// What the server publishes after a batch close.
#[derive(Debug, Clone, PartialEq)]
pub struct LinUcbState {
    /// `V'_t + lambda I` after PSD repair.
    pub gram: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
    pub u: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub lambda: f64,
    /// Last user covered by the sums behind this state.
    pub covered: usize,
    /// Whether the repair had to lift any eigenvalue.
    pub repaired: bool,
}

impl LinUcbState {
    pub fn initial(d: usize, lambda: f64) -> Self {
        Self {
            gram: DMatrix::identity(d, d) * lambda,
            gram_inv: DMatrix::identity(d, d) / lambda,
            u: DVector::zeros(d),
            theta_hat: DVector::zeros(d),
            lambda,
            covered: 0,
            repaired: false,
        }
    }

    /// Builds the published state from noisy sums. Eigenvalues of
    /// `V' + lambda I` below `lambda / 2` are clamped up to `lambda / 2`.
    pub fn from_sums(gram_sum: DMatrix<f64>, u: DVector<f64>, lambda: f64, covered: usize) -> Result<Self> {
        let d = u.len();
        let raw = gram_sum + DMatrix::identity(d, d) * lambda;
        let eig = SymmetricEigen::new(raw.clone());
        let floor = lambda / 2.0;
        let repaired = eig.eigenvalues.iter().any(|&e| e < floor);
        let clamped = eig.eigenvalues.map(|e| e.max(floor));
        if clamped.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::NumericalFailure(format!("Gram matrix eigenvalues {clamped:?}")));
        }
        let q = &eig.eigenvectors;
        let gram = if repaired { q * DMatrix::from_diagonal(&clamped) * q.transpose() } else { raw };
        let gram_inv = q * DMatrix::from_diagonal(&clamped.map(|e| 1.0 / e)) * q.transpose();
        let theta_hat = &gram_inv * &u;
        Ok(Self { gram, gram_inv, u, theta_hat, lambda, covered, repaired })
    }

    /// UCB score of each action.
    pub fn scores(&self, context: &Context, beta: f64) -> Vec<f64> {
        context
            .iter()
            .map(|f| {
                let x = DVector::from_column_slice(f);
                let width = (x.transpose() * &self.gram_inv * &x)[(0, 0)].max(0.0).sqrt();
                x.dot(&self.theta_hat) + beta * width
            })
            .collect()
    }
}

/// `argmax <phi, theta_hat> + beta ||phi||_{V^-1}`, lowest index on ties.
pub fn select_action(context: &Context, state: &LinUcbState, beta: f64) -> Result<usize> {
    if context.is_empty() {
        return Err(Error::invalid("empty action set"));
    }
    let scores = state.scores(context, beta);
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NumericalFailure(format!("non-finite UCB scores {scores:?}")));
    }
    let mut best = 0;
    for (a, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = a;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditConfig {
    pub n: usize,
    pub k: usize,
    /// Use the padded binary tree instead of the general `k`-level tree.
    pub binary_plan: bool,
    pub budget: PrivacyParams,
    pub mechanism: MechanismConfig,
    /// Confidence level; `None` means `1/n`.
    pub alpha_conf: Option<f64>,
    /// Multiplier on the derived per-entry noise bound `sigma'`.
    pub sigma_prime_scale: f64,
    /// Lower bound on `lambda`, used when there is no privacy noise.
    pub lambda_min: f64,
    /// Keep per-publish regularity diagnostics.
    pub diagnostics: bool,
}

impl BanditConfig {
    pub fn new(n: usize, k: usize, budget: PrivacyParams, mechanism: MechanismConfig) -> Self {
        Self {
            n,
            k,
            binary_plan: false,
            budget,
            mechanism,
            alpha_conf: None,
            sigma_prime_scale: 1.0,
            lambda_min: 1.0,
            diagnostics: false,
        }
    }

    pub fn plan(&self) -> Result<TreePlan> {
        if self.binary_plan {
            TreePlan::binary(self.n)
        } else {
            TreePlan::build(self.n, self.k)
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_conf.unwrap_or(1.0 / self.n as f64)
    }
}

/// Per-entry noise bound `sigma'` and the regularizer `lambda = 2 sigma' d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    /// Largest per-entry variance of a published sum over the horizon.
    pub max_entry_variance: f64,
    /// Gaussian quantile of the per-entry union bound.
    pub quantile: f64,
    pub sigma_prime: f64,
    pub lambda: f64,
}

/// Budget of one batch of each of the two estimators.
fn estimator_budget(config: &BanditConfig, plan: &TreePlan) -> Result<PrivacyParams> {
    split_budget(split_budget(config.budget, 2)?, plan.k())
}

pub fn calibrate(config: &BanditConfig, plan: &TreePlan, d: usize) -> Result<NoiseCalibration> {
    let budget = estimator_budget(config, plan)?;
    let dims = [d, d * (d + 1) / 2];
    let node_var = |id: usize, dim: usize| -> Result<f64> {
        mechanism_variance(&config.mechanism.spec_for(plan.node(id), budget, dim)?)
    };
    let mut max_entry_variance: f64 = 0.0;
    let mut t = 0;
    while t < plan.n() {
        t += 1;
        let cover = plan.vstar(t);
        for dim in dims {
            let mut v = 0.0;
            for &id in &cover.nodes {
                v += node_var(id, dim)?;
            }
            max_entry_variance = max_entry_variance.max(v);
        }
    }
    let n = config.n as f64;
    let entries = (d * d + d) as f64;
    let quantile = (2.0 * (4.0 * n * entries / config.alpha()).ln()).sqrt();
    let sigma_prime = config.sigma_prime_scale * quantile * max_entry_variance.sqrt();
    let lambda = (2.0 * sigma_prime * d as f64).max(config.lambda_min);
    Ok(NoiseCalibration { max_entry_variance, quantile, sigma_prime, lambda })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BanditStep {
    pub t: usize,
    pub action: usize,
    pub reward: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

/// Injected noise at one publish time, measured against the exact sums over
/// the same covered prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityPoint {
    pub t: usize,
    /// Spectral norm of `H_t = V_t - sum x x^T`.
    pub h_matrix_norm: f64,
    /// Smallest eigenvalue of `H_t`.
    pub h_matrix_min_eig: f64,
    /// Euclidean norm of `h_t = u_t - sum x y`.
    pub h_vector_norm: f64,
    /// `||h_t||_{H_t^-1}`, infinite when `H_t` is not positive definite.
    pub h_weighted_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub steps: Vec<BanditStep>,
    pub final_regret: f64,
    pub calibration: NoiseCalibration,
    pub regularity: Vec<RegularityPoint>,
}

/// Runs Private LinUCB for `config.n` users.
pub fn run_bandit(instance: &BanditInstance, config: &BanditConfig, seed: u64) -> Result<RegretTrace> {
    instance.validate()?;
    let d = instance.dimension();
    let plan = Arc::new(config.plan()?);
    if plan.n() != config.n {
        return Err(Error::invalid("plan size does not match horizon"));
    }
    let calibration = calibrate(config, &plan, d)?;
    let lambda = calibration.lambda;
    let alpha = config.alpha();
    let budget = estimator_budget(config, &plan)?;
    let tri = d * (d + 1) / 2;
    let mut vec_sum = AnyStreamingSum::new(plan.clone(), config.mechanism, budget, d, rng::derive_seed(seed, 1), false);
    let mut mat_sum = AnyStreamingSum::new(plan.clone(), config.mechanism, budget, tri, rng::derive_seed(seed, 2), false);

    let mut ctx_rng = rng::stream(seed, Purpose::Context, 0);
    let mut reward_rng = rng::stream(seed, Purpose::Reward, 0);
    let mut state = LinUcbState::initial(d, lambda);
    let mut steps = Vec::with_capacity(config.n);
    let mut regularity = Vec::new();
    let mut true_gram: Vec<DMatrix<f64>> = Vec::new();
    let mut true_u: Vec<DVector<f64>> = Vec::new();
    if config.diagnostics {
        true_gram.push(DMatrix::zeros(d, d));
        true_u.push(DVector::zeros(d));
    }
    let mut cum = 0.0;

    for t in 1..=config.n {
        let context = instance.context_at(t, &mut ctx_rng);
        let b = beta(t - 1, instance.sigma, d, lambda, alpha);
        let action = select_action(&context, &state, b)?;
        let x = &context[action];
        let mean = instance.mean_reward(x);
        let noise: f64 = StandardNormal.sample(&mut reward_rng);
        let reward = (mean + instance.sigma * noise).clamp(0.0, 1.0);
        let best = context.iter().map(|f| instance.mean_reward(f)).fold(f64::NEG_INFINITY, f64::max);
        let inst_regret = best - mean;
        cum += inst_regret;
        steps.push(BanditStep { t, action, reward, inst_regret, cum_regret: cum });

        let xv = DVector::from_column_slice(x);
        let outer = &xv * xv.transpose();
        let xy: Vec<f64> = x.iter().map(|v| v * reward).collect();
        let changed = vec_sum.push(&xy)?;
        mat_sum.push(&upper_triangle(&outer))?;
        if config.diagnostics {
            true_gram.push(true_gram.last().unwrap() + &outer);
            true_u.push(true_u.last().unwrap() + DVector::from_vec(xy));
        }

        if changed {
            let covered = plan.closed_prefix(t);
            let gram_sum = from_upper_triangle(mat_sum.estimate(), d)?;
            let u = DVector::from_column_slice(vec_sum.estimate());
            state = LinUcbState::from_sums(gram_sum, u, lambda, covered)?;
            if config.diagnostics {
                regularity.push(regularity_point(t, &state, &true_gram[covered], &true_u[covered]));
            }
        }
        // only the last state is needed; keep the history bounded
        if config.diagnostics && t % 1024 == 0 {
            let keep = state.covered;
            for i in 0..keep {
                true_gram[i] = DMatrix::zeros(0, 0);
                true_u[i] = DVector::zeros(0);
            }
        }
    }
    Ok(RegretTrace { steps, final_regret: cum, calibration, regularity })
}

fn regularity_point(t: usize, state: &LinUcbState, gram: &DMatrix<f64>, u: &DVector<f64>) -> RegularityPoint {
    let h_mat = &state.gram - gram;
    let h_vec = &state.u - u;
    let eig = SymmetricEigen::new(h_mat.clone());
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let spectral = eig.eigenvalues.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let weighted = if min_eig > 0.0 {
        let inv = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e)) * eig.eigenvectors.transpose();
        (h_vec.transpose() * inv * &h_vec)[(0, 0)].max(0.0).sqrt()
    } else {
        f64::INFINITY
    };
    RegularityPoint { t, h_matrix_norm: spectral, h_matrix_min_eig: min_eig, h_vector_norm: h_vec.norm(), h_weighted_norm: weighted }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub lambda: f64,
    pub rho_max: f64,
    pub rho_min: f64,
    pub gamma: f64,
    /// Publish times with `||H_t|| > 3 lambda / 2` or `||h_t|| > lambda / 2`.
    pub violations: Vec<usize>,
}

/// Summarizes the regularity quantities of an instrumented run.
pub fn regularity_diagnostics(trace: &RegretTrace) -> Result<RegularityReport> {
    if trace.regularity.is_empty() {
        return Err(Error::invalid("run was not instrumented (enable diagnostics)"));
    }
    let lambda = trace.calibration.lambda;
    let pts = &trace.regularity;
    Ok(RegularityReport {
        lambda,
        rho_max: pts.iter().map(|p| p.h_matrix_norm).fold(0.0, f64::max),
        rho_min: pts.iter().map(|p| p.h_matrix_min_eig).fold(f64::INFINITY, f64::min),
        gamma: pts.iter().map(|p| p.h_weighted_norm).fold(0.0, f64::max),
        violations: pts
            .iter()
            .filter(|p| p.h_matrix_norm > 1.5 * lambda + 1e-9 || p.h_vector_norm > 0.5 * lambda)
            .map(|p| p.t)
            .collect(),
    })
}
