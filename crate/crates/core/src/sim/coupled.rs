use rand::Rng;
use thiserror::Error;

use super::engine::{ConfigError, SimConfig, Terminal, Trajectory};
use crate::model::{pairs, ModelParams};
use crate::rng::replica_rng;
use crate::sumtree::SumTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoupledError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("configurations differ in {0}")]
    Mismatch(&'static str),
    #[error("lower configuration does not start below the upper one ({0})")]
    NotDominated(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub lower: Trajectory,
    pub upper: Trajectory,
    /// Whether the lower path stayed below the upper one after every event.
    pub dominated: bool,
    pub first_violation: Option<f64>,
}

struct Chain {
    params: ModelParams,
    xi: Vec<u32>,
    /// Sum of `ξ(y)(ξ(y)-1)` over the neighbours of each site, ghosts included.
    nbr_pairs: Vec<f64>,
    occupied: u64,
    extinct_at: Option<f64>,
}

impl Chain {
    fn new(params: ModelParams, xi: Vec<u32>, ghost: u32) -> Self {
        let n = xi.len();
        let m = params.range as i64;
        let q = |i: i64| {
            if (0..n as i64).contains(&i) {
                pairs(xi[i as usize])
            } else {
                pairs(ghost)
            }
        };
        let nbr_pairs = (0..n as i64)
            .map(|i| (1..=m).map(|d| q(i - d) + q(i + d)).sum())
            .collect();
        let occupied = xi.iter().map(|&k| u64::from(k)).sum();
        Chain { params, xi, nbr_pairs, occupied, extinct_at: None }
    }

    fn birth(&self, i: usize) -> f64 {
        let p = &self.params;
        let k = self.xi[i];
        let per_target = p.outer / (2.0 * f64::from(p.range));
        (p.inner * pairs(k) + per_target * self.nbr_pairs[i]) * f64::from(p.capacity - k) / p.pair_norm()
    }

    fn change(&mut self, i: usize, up: bool, t: f64) {
        let old = pairs(self.xi[i]);
        if up {
            self.xi[i] += 1;
            self.occupied += 1;
        } else {
            self.xi[i] -= 1;
            self.occupied -= 1;
            if self.occupied == 0 {
                self.extinct_at = Some(t);
            }
        }
        let delta = pairs(self.xi[i]) - old;
        let m = self.params.range as usize;
        let n = self.xi.len();
        for j in i.saturating_sub(m)..(i + m + 1).min(n) {
            if j != i {
                self.nbr_pairs[j] += delta;
            }
        }
    }
}

fn check_compatible(c1: &SimConfig, c2: &SimConfig) -> Result<(), CoupledError> {
    let (p1, p2) = (&c1.params, &c2.params);
    if p1.capacity != p2.capacity {
        return Err(CoupledError::Mismatch("N"));
    }
    if p1.range != p2.range {
        return Err(CoupledError::Mismatch("M"));
    }
    if c1.half_width != c2.half_width {
        return Err(CoupledError::Mismatch("window"));
    }
    if c1.boundary != c2.boundary {
        return Err(CoupledError::Mismatch("boundary"));
    }
    if p1.inner > p2.inner {
        return Err(CoupledError::NotDominated("a"));
    }
    if p1.outer > p2.outer {
        return Err(CoupledError::NotDominated("b"));
    }
    Ok(())
}

/// Run two chains on one set of random numbers so that the first stays below
/// the second. At each site the pair of chains jumps at the larger of the two
/// death rates plus the larger of the two birth rates; one uniform decides
/// which chains take part, so each marginal is the original chain. The
/// randomness is drawn from `cfg1.seed`, and snapshots follow `cfg1`'s grid
/// and horizon.
pub fn coupled_run(cfg1: &SimConfig, cfg2: &SimConfig) -> Result<CoupledRun, CoupledError> {
    cfg1.validate()?;
    cfg2.validate()?;
    check_compatible(cfg1, cfg2)?;
    let x1 = cfg1.initial_counts()?;
    let x2 = cfg2.initial_counts()?;
    if x1.iter().zip(&x2).any(|(a, b)| a > b) {
        return Err(CoupledError::NotDominated("initial state"));
    }
    let ghost = cfg1.boundary.ghost_count(cfg1.params.capacity);
    let mut lo = Chain::new(cfg1.params, x1, ghost);
    let mut hi = Chain::new(cfg2.params, x2, ghost);
    let window = cfg1.window();
    let n = window.len();
    let m = cfg1.params.range as usize;
    let mut rng = replica_rng(cfg1.seed, 0);

    let joint = |lo: &Chain, hi: &Chain, i: usize| {
        f64::from(lo.xi[i].max(hi.xi[i])) + lo.birth(i).max(hi.birth(i))
    };
    let mut tree = SumTree::new(n);
    tree.rebuild((0..n).map(|i| joint(&lo, &hi, i)));

    let mut times = vec![0.0];
    let mut snaps = (vec![lo.xi.clone()], vec![hi.xi.clone()]);
    let grid = |k: u64| cfg1.sample_interval.map_or(f64::INFINITY, |dt| k as f64 * dt);
    let mut next_grid = 1u64;
    let mut t = 0.0;
    let mut first_violation = None;
    let horizon = cfg1.horizon;
    let mut counts = (0u64, 0u64);

    loop {
        let total = tree.total();
        let next = if total > 0.0 { t - (1.0 - rng.random::<f64>()).ln() / total } else { f64::INFINITY };
        let stop = next > horizon;
        let until = if stop { horizon } else { next };
        while grid(next_grid) < until || (stop && grid(next_grid) <= horizon) {
            times.push(grid(next_grid));
            snaps.0.push(lo.xi.clone());
            snaps.1.push(hi.xi.clone());
            next_grid += 1;
        }
        if stop {
            break;
        }
        t = next;
        let i = tree.find(rng.random::<f64>() * total);
        let dmax = f64::from(lo.xi[i].max(hi.xi[i]));
        let (b1, b2) = (lo.birth(i), hi.birth(i));
        let u = rng.random::<f64>() * (dmax + b1.max(b2));
        if u < dmax {
            if u < f64::from(lo.xi[i]) {
                lo.change(i, false, t);
                counts.0 += 1;
            }
            if u < f64::from(hi.xi[i]) {
                hi.change(i, false, t);
                counts.1 += 1;
            }
        } else {
            let v = u - dmax;
            if v < b1 {
                lo.change(i, true, t);
                counts.0 += 1;
            }
            if v < b2 {
                hi.change(i, true, t);
                counts.1 += 1;
            }
        }
        if lo.xi[i] > hi.xi[i] && first_violation.is_none() {
            first_violation = Some(t);
        }
        for j in i.saturating_sub(m)..(i + m + 1).min(n) {
            tree.set(j, joint(&lo, &hi, j));
        }
        if hi.occupied == 0 {
            times.push(t);
            snaps.0.push(lo.xi.clone());
            snaps.1.push(hi.xi.clone());
            break;
        }
    }
    if *times.last().unwrap() < horizon && hi.occupied > 0 {
        times.push(horizon);
        snaps.0.push(lo.xi.clone());
        snaps.1.push(hi.xi.clone());
    }

    let make = |chain: &Chain, snapshots: Vec<Vec<u32>>, events: u64, start_empty: bool| Trajectory {
        window,
        times: times.clone(),
        snapshots,
        terminal: match (start_empty, chain.extinct_at) {
            (true, _) => Terminal::Extinct { time: 0.0 },
            (false, Some(time)) => Terminal::Extinct { time },
            (false, None) => Terminal::HorizonReached,
        },
        window_exit_warning: false,
        event_count: events,
        events: Vec::new(),
    };
    let lower_empty = snaps.0[0].iter().all(|&k| k == 0);
    let upper_empty = snaps.1[0].iter().all(|&k| k == 0);
    Ok(CoupledRun {
        lower: make(&lo, snaps.0, counts.0, lower_empty),
        upper: make(&hi, snaps.1, counts.1, upper_empty),
        dominated: first_violation.is_none(),
        first_violation,
    })
}
