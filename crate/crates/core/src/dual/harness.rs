//! Monte Carlo estimates built on the duals.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::influence::{
    bucket, decode, simulate, start_marks, stream_rate, Action, DualConfig, DualKind, Restriction, SiteField,
};
use crate::model::ModelParams;
use crate::rng::{exponential, replica_rng, BlockSource};
use crate::stats::Estimate;

/// Estimate with the number of replicas abandoned at the work cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CappedEstimate {
    pub estimate: Estimate,
    /// Replicas that hit the cap; they are excluded from the estimate.
    pub truncated: u64,
}

/// Depth-first evaluation of the root's activity that only generates the
/// parts of the influence set it needs. Branchings are tried latest first,
/// since their subtrees have the least time left, and the search stops at
/// the first pair of active children. The law of the answer is that of the
/// fully simulated influence set.
struct LazyEvaluator<'a> {
    params: ModelParams,
    field: &'a (dyn SiteField + Sync),
    restriction: Option<Restriction>,
    rng: ChaCha8Rng,
    visits: u64,
    budget: u64,
}

impl LazyEvaluator<'_> {
    fn uniform_mark(&mut self) -> f64 {
        loop {
            let w: f64 = self.rng.random();
            if w > 0.0 {
                return w;
            }
        }
    }

    fn exp(&mut self, rate: f64) -> f64 {
        -(1.0 - self.rng.random::<f64>()).ln() / rate
    }

    /// `None` once the visit budget is spent.
    fn active(&mut self, x: i64, w: f64, left: f64) -> Option<bool> {
        self.visits += 1;
        if self.visits > self.budget {
            return None;
        }
        if self.restriction.is_some_and(|r| !r.window.contains(x)) {
            return Some(w <= self.field.density(x));
        }
        let life = self.exp(1.0);
        if life >= left && w <= self.field.density(x) {
            return Some(true);
        }
        let span = life.min(left);
        let birth = self.params.inner + self.params.outer;
        if birth == 0.0 {
            return Some(false);
        }
        let mut births = Vec::new();
        let mut s = self.exp(birth);
        while s < span {
            let y = if self.rng.random::<f64>() * birth < self.params.inner {
                x
            } else {
                let m = i64::from(self.params.range);
                let j = self.rng.random_range(0..2 * m);
                if j < m {
                    x - m + j
                } else {
                    x + j - m + 1
                }
            };
            births.push((s, y));
            s += self.exp(birth);
        }
        for &(s, y) in births.iter().rev() {
            let w1 = self.uniform_mark();
            if self.active(y, w1, left - s)? {
                let w2 = self.uniform_mark();
                if self.active(y, w2, left - s)? {
                    return Some(true);
                }
            }
        }
        Some(false)
    }
}

#[allow(clippy::too_many_arguments)]
fn lazy_mc(
    params: &ModelParams,
    field: &(dyn SiteField + Sync),
    x: i64,
    t: f64,
    replicas: u64,
    seed: u64,
    restriction: Option<Restriction>,
    roots: usize,
    budget: u64,
) -> CappedEstimate {
    let outcomes: Vec<Option<bool>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut ev = LazyEvaluator {
                params: *params,
                field,
                restriction,
                rng: replica_rng(seed, r),
                visits: 0,
                budget,
            };
            let mut all = true;
            for _ in 0..roots {
                let w = ev.uniform_mark();
                all &= ev.active(x, w, t)?;
            }
            Some(all)
        })
        .collect();
    let done: Vec<bool> = outcomes.iter().flatten().copied().collect();
    let truncated = replicas - done.len() as u64;
    let hits = done.iter().filter(|&&b| b).count() as u64;
    CappedEstimate {
        estimate: Estimate::from_successes(hits, done.len().max(1) as u64),
        truncated,
    }
}

/// Default visit budget per replica for the lazy evaluator.
pub const LAZY_BUDGET: u64 = 50_000_000;

/// Probability that the dual started from one point at `x` is active for
/// `field` after time `t`.
pub fn phi_mc(
    params: &ModelParams,
    field: &(dyn SiteField + Sync),
    x: i64,
    t: f64,
    replicas: u64,
    seed: u64,
    restriction: Option<Restriction>,
) -> CappedEstimate {
    lazy_mc(params, field, x, t, replicas, seed, restriction, 1, LAZY_BUDGET)
}

/// As [`phi_mc`] with two independent start points at `x`, both required active.
pub fn phi2_mc(
    params: &ModelParams,
    field: &(dyn SiteField + Sync),
    x: i64,
    t: f64,
    replicas: u64,
    seed: u64,
    restriction: Option<Restriction>,
) -> CappedEstimate {
    lazy_mc(params, field, x, t, replicas, seed, restriction, 2, LAZY_BUDGET)
}

/// Mean of `sum exp(theta y)` over the live limiting-dual points at time `t`,
/// started from one point at the origin.
pub fn branching_moment_mc(params: &ModelParams, theta: f64, t: f64, replicas: u64, seed: u64) -> CappedEstimate {
    let rows: Vec<Option<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = crate::rng::replica_seed(seed, r);
            let cfg = DualConfig::new(*params, DualKind::Limiting, t, s);
            let iset = simulate(&cfg, &[(0, start_marks(s, 1)[0])]).expect("valid start");
            (!iset.truncated).then(|| iset.live().map(|p| (theta * p.site as f64).exp()).sum())
        })
        .collect();
    let done: Vec<f64> = rows.iter().flatten().copied().collect();
    CappedEstimate { estimate: Estimate::from_samples(&done), truncated: replicas - done.len() as u64 }
}

/// First collision time of the finite dual for every capacity in `capacities`,
/// all read off one limiting-dual path started from a pair at the origin.
///
/// Before its collision a finite dual coincides with the limiting dual, so
/// its collision time is the first time a new limiting-dual point shares a
/// site and mark bucket with a live point, or the two marks of a new pair
/// share a bucket. The path is simulated until every capacity has collided
/// or `t` passes. Capacities refine each other when they divide one another,
/// and then the collision times are ordered pathwise.
pub fn collision_times(params: &ModelParams, capacities: &[u32], t: f64, seed: u64, cap: usize) -> Option<Vec<Option<f64>>> {
    let source = BlockSource::new(seed);
    let marks = start_marks(seed, 2);
    let mut times: Vec<Option<f64>> = vec![None; capacities.len()];
    let mut tables: Vec<HashMap<(i64, u32), u32>> = vec![HashMap::new(); capacities.len()];
    // live points: label -> (site, mark, counter)
    let mut live: HashMap<u64, (i64, f64, u64)> = HashMap::new();
    let mut heap = std::collections::BinaryHeap::new();
    let rate = stream_rate(params);
    let mut next_label = 0u64;

    let mut add = |now: f64,
                   site: i64,
                   mark: f64,
                   live: &mut HashMap<u64, (i64, f64, u64)>,
                   heap: &mut std::collections::BinaryHeap<std::cmp::Reverse<(u64, u64)>>,
                   times: &mut Vec<Option<f64>>,
                   tables: &mut Vec<HashMap<(i64, u32), u32>>| {
        let label = next_label;
        next_label += 1;
        for (k, &n) in capacities.iter().enumerate() {
            let c = tables[k].entry((site, bucket(mark, n))).or_insert(0);
            if *c > 0 && times[k].is_none() {
                times[k] = Some(now);
            }
            *c += 1;
        }
        live.insert(label, (site, mark, 0));
        let w = source.block(label, 0);
        let due = now + exponential(w[0], rate);
        heap.push(std::cmp::Reverse((due.to_bits(), label)));
    };

    for &m in &marks {
        add(0.0, 0, m, &mut live, &mut heap, &mut times, &mut tables);
    }
    while let Some(std::cmp::Reverse((bits, label))) = heap.pop() {
        let now = f64::from_bits(bits);
        if now > t || times.iter().all(Option::is_some) {
            break;
        }
        let (site, _, counter) = live[&label];
        let w = source.block(label, counter);
        match decode(params, site, &w) {
            Action::Death => {
                let (site, mark, _) = live.remove(&label).expect("live");
                for (k, &n) in capacities.iter().enumerate() {
                    if let Some(c) = tables[k].get_mut(&(site, bucket(mark, n))) {
                        *c -= 1;
                    }
                }
            }
            Action::Birth { site: y, marks, .. } => {
                let e = live.get_mut(&label).expect("live");
                e.2 += 1;
                let w = source.block(label, e.2);
                heap.push(std::cmp::Reverse(((now + exponential(w[0], rate)).to_bits(), label)));
                for &m in &marks {
                    add(now, y, m, &mut live, &mut heap, &mut times, &mut tables);
                }
                if live.len() > cap {
                    return None;
                }
            }
        }
    }
    Some(times)
}

/// `P(tau^N <= t)` for each capacity, with common random numbers across
/// capacities. Truncated paths are dropped and counted.
pub fn collision_probability_mc(
    params: &ModelParams,
    capacities: &[u32],
    t: f64,
    replicas: u64,
    seed: u64,
) -> (Vec<Estimate>, u64) {
    let rows: Vec<Option<Vec<Option<f64>>>> = (0..replicas)
        .into_par_iter()
        .map(|r| collision_times(params, capacities, t, crate::rng::replica_seed(seed, r), 1_000_000))
        .collect();
    let done: Vec<&Vec<Option<f64>>> = rows.iter().flatten().collect();
    let est = (0..capacities.len())
        .map(|k| {
            let hits = done.iter().filter(|v| v[k].is_some_and(|s| s <= t)).count() as u64;
            Estimate::from_successes(hits, done.len().max(1) as u64)
        })
        .collect();
    (est, replicas - done.len() as u64)
}
