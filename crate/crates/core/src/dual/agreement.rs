use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::harness::phi_mc;
use super::influence::{resolve_active, simulate, start_marks, DualConfig, DualKind, Restriction};
use crate::meanfield::Profile;
use crate::model::{BoundaryPolicy, ModelParams};
use crate::rng::replica_seed;
use crate::sim::{final_site_counts, ConfigError, InitialCondition, SimConfig};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementConfig {
    pub params: ModelParams,
    /// Window half-width; both the chain and the dual see vacant ghosts.
    pub half_width: u32,
    /// Deterministic initial counts, one per window site.
    pub initial: Vec<u32>,
    pub site: i64,
    pub t: f64,
    pub eps: f64,
    pub forward_replicas: u64,
    pub dual_replicas: u64,
    pub seed: u64,
    /// Take the density from the limiting dual, which is the mean-field
    /// value at the site, instead of the finite dual.
    pub limiting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Dual estimate of the expected density at the site.
    pub phi: Estimate,
    pub collision: Estimate,
    /// Forward density `ξ_t(x)/N`.
    pub forward: Estimate,
    /// `|mean forward density - phi|`.
    pub mean_gap: f64,
    /// Deviation threshold `eps`.
    pub threshold: f64,
    /// Fraction of forward replicas deviating from `phi` by more than the threshold.
    pub deviation_frequency: Estimate,
    /// `2 eps^-2 P(tau^N <= t)`.
    pub bound: f64,
    pub truncated: u64,
}

/// Compare the forward density at one site with its dual representation.
pub fn occupation_agreement_mc(cfg: &AgreementConfig) -> Result<AgreementReport, ConfigError> {
    let n = cfg.params.capacity;
    let mut sim = SimConfig::new(cfg.params, cfg.half_width, cfg.t, cfg.seed);
    sim.initial = InitialCondition::Explicit(cfg.initial.clone());
    sim.validate()?;
    let window = sim.window();
    let restriction = Restriction { window, boundary: BoundaryPolicy::Lower };
    let density = Profile::new(
        window,
        cfg.initial.iter().map(|&k| f64::from(k) / f64::from(n)).collect(),
        BoundaryPolicy::Lower,
    );

    let dual_seed = cfg.seed ^ 0xD0A1_D0A1_D0A1_D0A1;
    let rows: Vec<Option<(bool, bool)>> = (0..cfg.dual_replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(dual_seed, r);
            let mut dc = DualConfig::new(cfg.params, DualKind::Capacity(n), cfg.t, s);
            dc.restriction = Some(restriction);
            let iset = simulate(&dc, &[(cfg.site, start_marks(s, 1)[0])]).expect("valid start");
            if iset.truncated {
                return None;
            }
            let collided = iset.collision.is_some_and(|c| c <= cfg.t);
            Some((resolve_active(&iset, &density).root_active, collided))
        })
        .collect();
    let done: Vec<(bool, bool)> = rows.iter().flatten().copied().collect();
    let truncated = cfg.dual_replicas - done.len() as u64;
    let m = done.len().max(1) as u64;
    let collision = Estimate::from_successes(done.iter().filter(|r| r.1).count() as u64, m);
    let phi = if cfg.limiting {
        phi_mc(&cfg.params, &density, cfg.site, cfg.t, cfg.dual_replicas, dual_seed, Some(restriction)).estimate
    } else {
        Estimate::from_successes(done.iter().filter(|r| r.0).count() as u64, m)
    };

    let counts = final_site_counts(&sim, cfg.forward_replicas, cfg.site)?;
    let dens: Vec<f64> = counts.iter().map(|&k| f64::from(k) / f64::from(n)).collect();
    let forward = Estimate::from_samples(&dens);
    let threshold = cfg.eps;
    let far = dens.iter().filter(|&&u| (u - phi.mean).abs() > threshold).count() as u64;
    Ok(AgreementReport {
        mean_gap: (forward.mean - phi.mean).abs(),
        bound: 2.0 * collision.mean / (cfg.eps * cfg.eps),
        deviation_frequency: Estimate::from_successes(far, cfg.forward_replicas),
        phi,
        collision,
        forward,
        threshold,
        truncated,
    })
}
