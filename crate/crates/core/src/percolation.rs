//! Oriented site percolation on `H = {(z, n) : z + n even}` with finite
//! width, and the harness that turns sampled block events into a density.

use std::collections::HashMap;
use std::ops::ControlFlow;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::detect::auto_half_width;
use crate::meanfield::ode::{integrate, OdeError, OdeOptions};
use crate::meanfield::{two_patch_equilibria, two_patch_field};
use crate::model::{BoundaryPolicy, ModelParams, Window};
use crate::rng::{replica_rng, replica_seed};
use crate::sim::{Simulator, Step};
use crate::stats::Estimate;

/// Enumeration refuses cones with more free sites than this.
pub const MAX_ENUMERATED_SITES: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercolationError {
    #[error("closure probability {0} outside [0, 1]")]
    BadGamma(f64),
    #[error("site ({z}, {n}) is not on the lattice")]
    OffLattice { z: i64, n: u32 },
    #[error("cone has {0} sites, more than {MAX_ENUMERATED_SITES} to enumerate")]
    TooManySites(usize),
    #[error("block times: {0}")]
    Ode(#[from] OdeError),
    #[error("block event undefined: {0}")]
    Block(&'static str),
}

pub fn on_lattice(z: i64, n: u32) -> bool {
    (z + i64::from(n)).rem_euclid(2) == 0
}

/// Open/closed states of every lattice site with `|z| ≤ width` and
/// `0 ≤ n ≤ depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedGrid {
    pub depth: u32,
    pub width: u32,
    /// `open[n][z + width]`; entries off the lattice are false.
    pub open: Vec<Vec<bool>>,
}

impl OrientedGrid {
    pub fn all(depth: u32, width: u32, open: bool) -> Self {
        let cols = 2 * width as usize + 1;
        let mut g = OrientedGrid { depth, width, open: vec![vec![false; cols]; depth as usize + 1] };
        for n in 0..=depth {
            for z in -i64::from(width)..=i64::from(width) {
                if on_lattice(z, n) {
                    g.set(z, n, open);
                }
            }
        }
        g
    }

    fn col(&self, z: i64) -> Option<usize> {
        (z.unsigned_abs() <= u64::from(self.width)).then(|| (z + i64::from(self.width)) as usize)
    }

    pub fn is_open(&self, z: i64, n: u32) -> bool {
        n <= self.depth && self.col(z).is_some_and(|c| self.open[n as usize][c])
    }

    pub fn set(&mut self, z: i64, n: u32, open: bool) {
        let c = self.col(z).expect("inside width");
        self.open[n as usize][c] = open && on_lattice(z, n);
    }

    /// Lattice sites of level `n`.
    pub fn level(&self, n: u32) -> impl Iterator<Item = i64> {
        let w = i64::from(self.width);
        (-w..=w).filter(move |&z| on_lattice(z, n))
    }

    /// `n,z,open,wet` rows.
    pub fn to_csv(&self, wet: &WetSet) -> String {
        let mut out = String::from("n,z,open,wet\n");
        for n in 0..=self.depth {
            for z in self.level(n) {
                let w = wet.levels.get(n as usize).is_some_and(|l| l.contains(&z));
                out += &format!("{n},{z},{},{}\n", u8::from(self.is_open(z, n)), u8::from(w));
            }
        }
        out
    }
}

/// Wet sites per level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WetSet {
    pub levels: Vec<Vec<i64>>,
}

impl WetSet {
    pub fn survives(&self) -> bool {
        self.levels.last().is_some_and(|l| !l.is_empty())
    }
}

/// One level of the wet-set recursion: open sites of level `n + 1` reached
/// from `prev` by a step `±1`.
pub fn wet_step(grid: &OrientedGrid, prev: &[i64], n: u32) -> Vec<i64> {
    let mut next: Vec<i64> = prev
        .iter()
        .flat_map(|&z| [z - 1, z + 1])
        .filter(|&z| grid.is_open(z, n + 1))
        .collect();
    next.sort_unstable();
    next.dedup();
    next
}

/// Sites reachable from `w0` at level 0 along open paths. The level-0 sites
/// are wet as given regardless of their own state.
pub fn evolve_wet(grid: &OrientedGrid, w0: &[i64]) -> Result<WetSet, PercolationError> {
    let mut cur: Vec<i64> = w0.to_vec();
    for &z in &cur {
        if !on_lattice(z, 0) || z.unsigned_abs() > u64::from(grid.width) {
            return Err(PercolationError::OffLattice { z, n: 0 });
        }
    }
    cur.sort_unstable();
    cur.dedup();
    let mut levels = vec![cur];
    for n in 0..grid.depth {
        let next = wet_step(grid, &levels[n as usize], n);
        levels.push(next);
    }
    Ok(WetSet { levels })
}

fn check_gamma(gamma: f64) -> Result<(), PercolationError> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(PercolationError::BadGamma(gamma))
    }
}

/// i.i.d. uniforms on a padded box from which a `k`-dependent grid is read
/// off: a site is open iff every uniform within ℓ∞ distance `⌊k/2⌋` of it
/// clears the threshold. Sites further than `k` apart share no uniforms, and
/// on `H` the ℓ∞ distance is the graph distance.
#[derive(Debug, Clone)]
pub struct UniformField {
    pub depth: u32,
    pub width: u32,
    pub k: u32,
    radius: i64,
    cols: usize,
    u: Vec<f64>,
    /// Per-site minimum over its window.
    min: Vec<f64>,
}

impl UniformField {
    pub fn sample<R: Rng>(depth: u32, width: u32, k: u32, rng: &mut R) -> Self {
        let radius = i64::from(k / 2);
        let cols = (2 * i64::from(width) + 1 + 2 * radius) as usize;
        let rows = (i64::from(depth) + 1 + 2 * radius) as usize;
        let u: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
        let mut f = UniformField { depth, width, k, radius, cols, u, min: Vec::new() };
        let w = i64::from(width);
        let mut min = Vec::with_capacity((depth as usize + 1) * (2 * width as usize + 1));
        for n in 0..=i64::from(depth) {
            for z in -w..=w {
                let mut m = f64::INFINITY;
                for dn in -radius..=radius {
                    for dz in -radius..=radius {
                        m = m.min(f.raw(z + dz, n + dn));
                    }
                }
                min.push(m);
            }
        }
        f.min = min;
        f
    }

    fn raw(&self, z: i64, n: i64) -> f64 {
        let r = (n + self.radius) as usize;
        let c = (z + i64::from(self.width) + self.radius) as usize;
        self.u[r * self.cols + c]
    }

    /// Number of uniforms feeding each site.
    pub fn window_size(&self) -> u32 {
        let s = 2 * self.radius as u32 + 1;
        s * s
    }

    /// Threshold `q` with `P(all window uniforms > q) = 1 − γ`.
    pub fn threshold(&self, gamma: f64) -> f64 {
        1.0 - (1.0 - gamma).powf(1.0 / f64::from(self.window_size()))
    }

    /// The grid at closure probability `γ`. Grids for different `γ` built
    /// from one field are coupled: raising `γ` only closes sites.
    pub fn grid(&self, gamma: f64) -> OrientedGrid {
        let q = self.threshold(gamma);
        let mut g = OrientedGrid::all(self.depth, self.width, false);
        let cols = 2 * self.width as usize + 1;
        for n in 0..=self.depth {
            for z in g.level(n).collect::<Vec<_>>() {
                let m = self.min[n as usize * cols + (z + i64::from(self.width)) as usize];
                // gamma = 0 opens everything, gamma = 1 closes everything
                g.set(z, n, gamma < 1.0 && (gamma == 0.0 || m > q));
            }
        }
        g
    }
}

/// Default lateral half-width keeping the slope-1 cone inside.
pub fn default_width(depth: u32) -> u32 {
    4 * depth
}

/// Fraction of replicas with `W_depth ≠ ∅`.
pub fn cluster_survival_mc(
    gamma: f64,
    k: u32,
    depth: u32,
    width: u32,
    w0: &[i64],
    replicas: u64,
    seed: u64,
) -> Result<Estimate, PercolationError> {
    check_gamma(gamma)?;
    let alive = coupled_survival(&[gamma], k, depth, width, w0, replicas, seed)?;
    Ok(Estimate::from_successes(alive.iter().filter(|r| r[0]).count() as u64, replicas))
}

/// Survival indicators of each replica for every `γ` in `gammas`, all read
/// off one uniform field per replica.
pub fn coupled_survival(
    gammas: &[f64],
    k: u32,
    depth: u32,
    width: u32,
    w0: &[i64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<Vec<bool>>, PercolationError> {
    for &g in gammas {
        check_gamma(g)?;
    }
    let empty = OrientedGrid::all(0, width, false);
    evolve_wet(&empty, w0)?;
    Ok((0..replicas)
        .into_par_iter()
        .map(|r| {
            let field = UniformField::sample(depth, width, k, &mut replica_rng(seed, r));
            gammas
                .iter()
                .map(|&g| evolve_wet(&field.grid(g), w0).expect("checked").survives())
                .collect()
        })
        .collect())
}

/// Indicator of `0 ∈ W_n` for each replica and each even `n ≤ depth`.
pub fn origin_wet_frequency(
    gamma: f64,
    k: u32,
    depth: u32,
    width: u32,
    w0: &[i64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<Estimate>, PercolationError> {
    check_gamma(gamma)?;
    let rows: Vec<Vec<bool>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let field = UniformField::sample(depth, width, k, &mut replica_rng(seed, r));
            let wet = evolve_wet(&field.grid(gamma), w0).expect("validated start");
            wet.levels.iter().step_by(2).map(|l| l.binary_search(&0).is_ok()).collect()
        })
        .collect();
    let levels = rows.first().map_or(0, Vec::len);
    Ok((0..levels)
        .map(|i| Estimate::from_successes(rows.iter().filter(|r| r[i]).count() as u64, replicas))
        .collect())
}

/// Lattice sites at levels `1..=depth` inside the width that some open path
/// from `w0` could reach.
fn cone(depth: u32, width: u32, w0: &[i64]) -> Vec<(i64, u32)> {
    let grid = OrientedGrid::all(depth, width, true);
    let wet = evolve_wet(&grid, w0).expect("validated start");
    (1..=depth).flat_map(|n| wet.levels[n as usize].iter().map(move |&z| (z, n))).collect()
}

/// Survival counts by number of open cone sites: `counts[m]` assignments
/// with `m` open sites leave `W_depth ≠ ∅`. Runs [`evolve_wet`] on every
/// open/closed assignment of the cone.
pub fn enumerate_survival(depth: u32, width: u32, w0: &[i64]) -> Result<Vec<u64>, PercolationError> {
    evolve_wet(&OrientedGrid::all(0, width, false), w0)?;
    let sites = cone(depth, width, w0);
    if sites.len() > MAX_ENUMERATED_SITES {
        return Err(PercolationError::TooManySites(sites.len()));
    }
    let mut counts = vec![0u64; sites.len() + 1];
    let mut grid = OrientedGrid::all(depth, width, false);
    for mask in 0u64..(1u64 << sites.len()) {
        for (i, &(z, n)) in sites.iter().enumerate() {
            grid.set(z, n, mask >> i & 1 == 1);
        }
        if evolve_wet(&grid, w0)?.survives() {
            counts[mask.count_ones() as usize] += 1;
        }
    }
    Ok(counts)
}

/// `Σ_m counts[m] p^m (1−p)^{S−m}` with open probability `p = 1 − γ`.
pub fn enumerated_probability(counts: &[u64], gamma: &BigRational) -> BigRational {
    let p = BigRational::one() - gamma.clone();
    let s = counts.len() - 1;
    counts
        .iter()
        .enumerate()
        .map(|(m, &c)| {
            BigRational::from_integer(BigInt::from(c)) * num_traits::pow(p.clone(), m) * num_traits::pow(gamma.clone(), s - m)
        })
        .fold(BigRational::zero(), |a, b| a + b)
}

/// Exact `P(W_depth ≠ ∅)` for i.i.d. sites by propagating the law of the
/// wet set level by level.
pub fn survival_probability_exact(
    depth: u32,
    width: u32,
    w0: &[i64],
    gamma: &BigRational,
) -> Result<BigRational, PercolationError> {
    evolve_wet(&OrientedGrid::all(0, width, false), w0)?;
    let p = BigRational::one() - gamma.clone();
    let mut start = w0.to_vec();
    start.sort_unstable();
    start.dedup();
    let mut law: HashMap<Vec<i64>, BigRational> = HashMap::from([(start, BigRational::one())]);
    let open = OrientedGrid::all(depth, width, true);
    for n in 0..depth {
        let mut next: HashMap<Vec<i64>, BigRational> = HashMap::new();
        for (w, pr) in law {
            let cand = wet_step(&open, &w, n);
            let c = cand.len();
            for mask in 0u64..(1u64 << c) {
                let kept: Vec<i64> = (0..c).filter(|i| mask >> i & 1 == 1).map(|i| cand[i]).collect();
                let m = kept.len();
                let weight = pr.clone() * num_traits::pow(p.clone(), m) * num_traits::pow(gamma.clone(), c - m);
                *next.entry(kept).or_insert_with(BigRational::zero) += weight;
            }
        }
        law = next;
    }
    Ok(law.into_iter().filter(|(w, _)| !w.is_empty()).map(|(_, pr)| pr).fold(BigRational::zero(), |a, b| a + b))
}

/// Density of good block events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodEventDensity {
    pub density: Estimate,
    pub gamma_hat: f64,
}

/// Run `sampler` on the seeds of `replicas` independent trials.
pub fn good_event_density<S>(sampler: S, replicas: u64, seed: u64) -> GoodEventDensity
where
    S: Fn(u64) -> bool + Sync,
{
    let good = (0..replicas).into_par_iter().filter(|&r| sampler(replica_seed(seed, r))).count() as u64;
    let density = Estimate::from_successes(good, replicas);
    GoodEventDensity { density, gamma_hat: 1.0 - density.mean }
}

/// Percolation survival at the closure probability a sampled density implies.
pub fn survival_from_density(
    density: &GoodEventDensity,
    k: u32,
    depth: u32,
    w0: &[i64],
    replicas: u64,
    seed: u64,
) -> Result<Estimate, PercolationError> {
    cluster_survival_mc(density.gamma_hat.clamp(0.0, 1.0), k, depth, default_width(depth), w0, replicas, seed)
}

/// Time scales of the spread block for the two-patch flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadTimes {
    pub u_plus: f64,
    pub eps: f64,
    /// After this time `v ≥ u+ − ε/2` holds for good from `(1, 0)`.
    pub t1: f64,
    /// From `v = 0` with `u` pinned at `u+ − ε`, `v ≥ u+ − ε/2` from here on.
    pub t2: f64,
}

/// Last time on `[0, horizon]` at which `v(t) < level` along a scalar or
/// planar flow, `None` if the flow ends below `level`.
fn settle_time<F>(f: F, y0: &[f64], horizon: f64, level: f64) -> Result<Option<f64>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut y = y0.to_vec();
    let last = y.len() - 1;
    let mut settle = if y0[last] >= level { None } else { Some(0.0) };
    integrate(f, 0.0, &mut y, horizon, &OdeOptions::default(), |step| {
        let (a, b) = (step.eval_component(step.t0, last), step.y1[last]);
        if b < level {
            settle = Some(step.t1);
        } else if a < level {
            let (mut lo, mut hi) = (step.t0, step.t1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if step.eval_component(mid, last) < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            settle = Some(hi);
        }
        ControlFlow::Continue(())
    })?;
    Ok(if y[last] < level { None } else { Some(settle.unwrap_or(0.0)) })
}

pub fn spread_block_times(p: &ModelParams, eps: f64, horizon: f64) -> Result<SpreadTimes, PercolationError> {
    let (_, u_plus) = two_patch_equilibria(p).positive_pair().ok_or(PercolationError::Block("r = a + b/2 must exceed 4"))?;
    let level = u_plus - eps / 2.0;
    let t1 = settle_time(
        |_, y, d| {
            d[0] = two_patch_field(p, y[0], y[1]);
            d[1] = two_patch_field(p, y[1], y[0]);
        },
        &[1.0, 0.0],
        horizon,
        level,
    )?
    .ok_or(PercolationError::Block("two-patch flow from (1, 0) never settles near u+"))?;
    let pinned = u_plus - eps;
    let t2 = settle_time(|_, y, d| d[0] = two_patch_field(p, y[0], pinned), &[0.0], horizon, level)?
        .ok_or(PercolationError::Block("pinned neighbour keeps v below u+ − ε/2; decrease ε"))?;
    Ok(SpreadTimes { u_plus, eps, t1, t2 })
}

/// The first spread block as a good-event sampler: start with the origin
/// full and everything else empty (lower policy, window sized for the block
/// duration), and call the trial good when `ξ_t(±1) > (u+ − ε)N` throughout
/// `(T1, T1 + 2T2)`.
pub fn spread_block_sampler(p: ModelParams, times: SpreadTimes) -> impl Fn(u64) -> bool + Sync {
    let end = times.t1 + 2.0 * times.t2;
    let half = auto_half_width(&p, 1, end);
    let window = Window::symmetric(half);
    let floor = (times.u_plus - times.eps) * f64::from(p.capacity);
    let mut init = vec![0u32; window.len()];
    init[window.index(0).expect("origin")] = p.capacity;
    let (left, right) = (window.index(-1).expect("site -1"), window.index(1).expect("site 1"));
    move |seed| {
        let mut sim = Simulator::new(p, window, BoundaryPolicy::Lower, &init, replica_rng(seed, 0));
        let ok = |sim: &Simulator| f64::from(sim.counts()[left]) > floor && f64::from(sim.counts()[right]) > floor;
        loop {
            match sim.step_until(times.t1) {
                Step::Event { .. } => {}
                Step::Limit => break,
                Step::Absorbed => return false,
            }
        }
        if !ok(&sim) {
            return false;
        }
        loop {
            match sim.step_until(end) {
                Step::Event { .. } => {
                    if !ok(&sim) {
                        return false;
                    }
                }
                Step::Limit => return true,
                Step::Absorbed => return false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn full_cone_and_all_closed() {
        let open = OrientedGrid::all(5, 20, true);
        let w = evolve_wet(&open, &[0]).unwrap();
        for n in 0..=5i64 {
            let want: Vec<i64> = (0..=n).map(|i| -n + 2 * i).collect();
            assert_eq!(w.levels[n as usize], want);
        }
        let closed = OrientedGrid::all(5, 20, false);
        assert!(evolve_wet(&closed, &[0]).unwrap().levels[1].is_empty());
        assert!(evolve_wet(&open, &[1]).is_err());
    }

    #[test]
    fn field_extremes() {
        let f = UniformField::sample(6, 10, 2, &mut replica_rng(3, 0));
        assert!(evolve_wet(&f.grid(0.0), &[0]).unwrap().survives());
        assert!(!evolve_wet(&f.grid(1.0), &[0]).unwrap().survives());
        assert_eq!(f.window_size(), 9);
    }

    #[test]
    fn transfer_matches_enumeration_small() {
        let counts = enumerate_survival(2, 4, &[0]).unwrap();
        for g in [q(1, 5), q(1, 2)] {
            assert_eq!(enumerated_probability(&counts, &g), survival_probability_exact(2, 4, &[0], &g).unwrap());
        }
        let half = survival_probability_exact(1, 4, &[0], &q(1, 2)).unwrap();
        assert_eq!(half, q(3, 4));
    }

    #[test]
    fn spread_times_exist() {
        let p = ModelParams::new(6.0, 3.0, 50, 1).unwrap();
        let t = spread_block_times(&p, 0.1, 200.0).unwrap();
        assert!(t.t1 > 0.0 && t.t2 > 0.0, "{t:?}");
    }
}
