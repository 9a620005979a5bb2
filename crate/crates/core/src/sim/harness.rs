use rayon::prelude::*;

use super::engine::{ConfigError, SimConfig, Simulator, Trajectory};
use crate::rng::replica_rng;
use crate::stats::Estimate;

/// Run `f` on every replica in parallel with one simulator per worker, and
/// return results in replica order.
fn per_replica<T: Send>(
    cfg: &SimConfig,
    replicas: u64,
    f: impl Fn(&mut Simulator) -> T + Sync,
) -> Result<Vec<T>, ConfigError> {
    cfg.validate()?;
    let init = cfg.initial_counts()?;
    // contiguous chunks so each simulator (O(window) to build) serves many replicas
    let chunks = (rayon::current_num_threads() as u64 * 4).clamp(1, replicas.max(1));
    let size = replicas.div_ceil(chunks);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let range = (c * size).min(replicas)..((c + 1) * size).min(replicas);
            if range.is_empty() {
                return Vec::new();
            }
            let mut sim = Simulator::new(cfg.params, cfg.window(), cfg.boundary, &init, replica_rng(cfg.seed, 0));
            range
                .map(|r| {
                    sim.restart(replica_rng(cfg.seed, r));
                    f(&mut sim)
                })
                .collect()
        })
        .collect();
    let out = parts.into_iter().flatten().collect();
    Ok(out)
}

/// Advance to the horizon or to extinction, whichever comes first.
fn run_out(sim: &mut Simulator, horizon: f64) {
    while !sim.is_extinct() {
        match sim.step_until(horizon) {
            super::Step::Event { .. } => {}
            _ => break,
        }
    }
}

/// Fraction of replicas still alive at the horizon.
pub fn survival_probability_mc(cfg: &SimConfig, replicas: u64) -> Result<Estimate, ConfigError> {
    let alive = per_replica(cfg, replicas, |sim| {
        run_out(sim, cfg.horizon);
        !sim.is_extinct()
    })?;
    Ok(Estimate::from_successes(alive.iter().filter(|&&a| a).count() as u64, replicas))
}

/// Extinction time of each replica, `None` if it survived the horizon.
pub fn extinction_times_mc(cfg: &SimConfig, replicas: u64) -> Result<Vec<Option<f64>>, ConfigError> {
    per_replica(cfg, replicas, |sim| {
        run_out(sim, cfg.horizon);
        sim.is_extinct().then(|| sim.time())
    })
}

/// Time the origin patch spends at each occupancy level.
#[derive(Debug, Clone)]
pub struct OccupationSummary {
    /// Index `j` is the occupancy level, `0..=N`.
    pub per_level: Vec<Estimate>,
    pub extinct: u64,
    pub replicas: u64,
}

/// Occupation times of the origin patch up to extinction or the horizon.
pub fn origin_occupation_mc(cfg: &SimConfig, replicas: u64) -> Result<OccupationSummary, ConfigError> {
    let origin = cfg.window().index(0).expect("origin in window");
    let n = cfg.params.capacity as usize;
    let rows = per_replica(cfg, replicas, |sim| {
        let mut occ = vec![0.0; n + 1];
        let mut last = 0.0;
        loop {
            let level = sim.counts()[origin] as usize;
            let step = sim.step_until(cfg.horizon);
            occ[level] += sim.time() - last;
            last = sim.time();
            if !matches!(step, super::Step::Event { .. }) || sim.is_extinct() {
                break;
            }
        }
        (occ, sim.is_extinct())
    })?;
    let per_level = (0..=n)
        .map(|j| Estimate::from_samples(&rows.iter().map(|r| r.0[j]).collect::<Vec<_>>()))
        .collect();
    let extinct = rows.iter().filter(|r| r.1).count() as u64;
    Ok(OccupationSummary { per_level, extinct, replicas })
}

/// Earliest snapshot time at which every patch in `[-L, L]` is empty.
pub fn vacant_zone_detector(traj: &Trajectory, half_width: u32) -> Option<f64> {
    let lo = traj.window.index(-i64::from(half_width))?;
    let hi = traj.window.index(i64::from(half_width))?;
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .find(|(_, s)| s[lo..=hi].iter().all(|&k| k == 0))
        .map(|(&t, _)| t)
}

/// Fraction of replicas whose core `[-L, L]` empties at some event time
/// before the horizon.
pub fn vacant_zone_frequency(cfg: &SimConfig, half_width: u32, replicas: u64) -> Result<Estimate, ConfigError> {
    let w = cfg.window();
    let lo = w.index(-i64::from(half_width)).expect("core inside window");
    let hi = w.index(i64::from(half_width)).expect("core inside window");
    let hits = per_replica(cfg, replicas, |sim| {
        let mut core: u64 = sim.counts()[lo..=hi].iter().map(|&k| u64::from(k)).sum();
        if core == 0 {
            return true;
        }
        while let super::Step::Event { event, .. } = sim.step_until(cfg.horizon) {
            if let Some(ev) = event {
                use crate::model::EventKind::*;
                let (x, up) = match ev {
                    Death(x) => (x, false),
                    InnerBirth(x) | OuterBirth { target: x, .. } => (x, true),
                };
                if x.unsigned_abs() <= u64::from(half_width) {
                    if up {
                        core += 1;
                    } else {
                        core -= 1;
                    }
                    if core == 0 {
                        return true;
                    }
                }
            }
        }
        false
    })?;
    Ok(Estimate::from_successes(hits.iter().filter(|&&h| h).count() as u64, replicas))
}

/// Occupancy of site `x` at the horizon in every replica.
pub fn final_site_counts(cfg: &SimConfig, replicas: u64, x: i64) -> Result<Vec<u32>, ConfigError> {
    let i = cfg.window().index(x).expect("site inside window");
    per_replica(cfg, replicas, |sim| {
        run_out(sim, cfg.horizon);
        sim.counts()[i]
    })
}
