//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use csdp::plan::TreePlan;
use csdp::rng::{self, Purpose};
use rand::Rng;

/// Brute-force cover of the longest closed prefix at time `t` with the
/// fewest closed nodes, by dynamic programming over prefix lengths.
/// Returns the `(start, end)` ranges in order.
pub fn brute_cover(plan: &TreePlan, t: usize) -> Vec<(usize, usize)> {
    let closed: Vec<(usize, usize)> = plan.nodes().iter().filter(|v| v.end <= t).map(|v| (v.start, v.end)).collect();
    let mut best: Vec<Option<(usize, usize)>> = vec![None; t + 1];
    let mut count = vec![usize::MAX; t + 1];
    count[0] = 0;
    for pos in 0..t {
        if count[pos] == usize::MAX {
            continue;
        }
        for &(s, e) in &closed {
            if s == pos + 1 && count[pos] + 1 < count[e] {
                count[e] = count[pos] + 1;
                best[e] = Some((s, e));
            }
        }
    }
    let mut end = (0..=t).rev().find(|&p| count[p] != usize::MAX).unwrap_or(0);
    let mut ranges = Vec::new();
    while end > 0 {
        let (s, e) = best[end].expect("reachable");
        ranges.push((s, e));
        end = s - 1;
    }
    ranges.reverse();
    ranges
}

/// Checks `vstar(t)` against the brute-force cover: same ranges, and each
/// chosen node has the highest level among closed nodes with its range.
pub fn check_vstar(plan: &TreePlan, t: usize) -> Result<(), String> {
    let vs = plan.vstar(t);
    let got: Vec<(usize, usize)> = vs.nodes.iter().map(|&id| (plan.node(id).start, plan.node(id).end)).collect();
    let want = brute_cover(plan, t);
    if got != want {
        return Err(format!("n={} k={} t={t}: vstar {got:?} != brute force {want:?}", plan.n(), plan.k()));
    }
    let covered = want.last().map_or(0, |r| r.1);
    if vs.covered != covered {
        return Err(format!("t={t}: covered {} != {covered}", vs.covered));
    }
    for &id in &vs.nodes {
        let v = plan.node(id);
        let top = plan.nodes().iter().filter(|u| u.start == v.start && u.end == v.end).map(|u| u.level).max();
        if top != Some(v.level) {
            return Err(format!("t={t}: node {id} is not the highest node over [{}, {}]", v.start, v.end));
        }
    }
    Ok(())
}

/// Every plan the tests sweep: general plans for each valid `k` in `ks`
/// and, for `n >= 3`, the binary plan.
pub fn plans_up_to(max_n: usize, ks: &[usize]) -> Vec<TreePlan> {
    let mut out = Vec::new();
    for n in 2..=max_n {
        for &k in ks {
            if let Ok(p) = TreePlan::build(n, k) {
                out.push(p);
            }
        }
        if n >= 3 {
            out.push(TreePlan::binary(n).unwrap());
        }
    }
    out
}

pub fn random_bits(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Purpose::Input, 99);
    (0..n).map(|_| rng.random::<bool>() as u8 as f64).collect()
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `trials` fair coin flips.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    use statrs::distribution::{Binomial, DiscreteCDF};
    if wins == 0 {
        return 1.0;
    }
    1.0 - Binomial::new(0.5, trials as u64).unwrap().cdf(wins as u64 - 1)
}
