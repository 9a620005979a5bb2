//! One function per subcommand. Each resolves its config block, writes its
//! CSV files through an [`Output`] and finishes with a run record.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use serde_json::json;

use patchdyn_core::dual::micro::{duality_sweep, MicroInstance};
use patchdyn_core::dual::{occupation_agreement_mc, AgreementConfig};
use patchdyn_core::isolated::{
    collision_mc, collision_probability_bound, export_count_mean, occupation_table, survival_upper_bound, table_csv,
};
use patchdyn_core::meanfield::detect::auto_half_width;
use patchdyn_core::meanfield::profile::integrate_observed;
use patchdyn_core::meanfield::{
    equilibria, front_preserved, integrate_sampled, phase_portrait, two_patch_equilibria, DetectorOptions, OdeOptions,
    Outcome, Profile,
};
use patchdyn_core::model::Window;
use patchdyn_core::percolation::{
    coupled_survival, default_width, evolve_wet, good_event_density, spread_block_sampler, spread_block_times,
    survival_from_density, UniformField,
};
use patchdyn_core::rng::replica_rng;
use patchdyn_core::sim::{extinction_times_mc, origin_occupation_mc, run, InitialCondition, SimConfig, Terminal};
use patchdyn_core::{BoundaryPolicy, Estimate, ModelParams};

use crate::config::{load, ExperimentConfig, GlobalFlags, Globals, FORMAT};
use crate::error::{config, CliError};
use crate::record::{Output, RunRecord};

/// Outcome of a command: its top-level record and an error to exit with
/// once every file is on disk.
pub struct Finished {
    pub record: RunRecord,
    pub failure: Option<CliError>,
}

fn experiment<C: Serialize>(command: &'static str, g: &Globals, replicas: u64, params: C) -> ExperimentConfig<C> {
    ExperimentConfig { format: FORMAT, command, seed: g.seed, replicas, out: g.out.clone(), threads: g.threads, params }
}

fn params(inner: f64, outer: f64, capacity: u32, range: u32) -> Result<ModelParams, CliError> {
    ModelParams::new(inner, outer, capacity, range).map_err(config("model"))
}

fn est(e: &Estimate) -> serde_json::Value {
    json!({ "mean": e.mean, "se": e.se, "samples": e.samples })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub inner: f64,
    pub outer: f64,
    /// One run record per capacity.
    pub capacities: Vec<u32>,
    pub range: u32,
    /// Sized from the spread bound when absent.
    pub half_width: Option<u32>,
    pub boundary: BoundaryPolicy,
    pub horizon: f64,
    /// Half-width of the initially full block; 0 is the origin alone.
    pub block: u32,
    pub sample_interval: f64,
    /// Trajectories written per capacity.
    pub trajectories: u32,
    pub max_events: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            inner: 2.0,
            outer: 1.0,
            capacities: vec![50],
            range: 1,
            half_width: None,
            boundary: BoundaryPolicy::Lower,
            horizon: 10.0,
            block: 0,
            sample_interval: 0.5,
            trajectories: 1,
            max_events: 50_000_000,
        }
    }
}

fn trajectory_csv(times: &[f64], window: Window, snapshots: &[Vec<u32>]) -> String {
    let mut out = String::from("t,x,xi\n");
    for (t, snap) in times.iter().zip(snapshots) {
        for (i, xi) in snap.iter().enumerate() {
            writeln!(out, "{t},{},{xi}", window.site(i)).unwrap();
        }
    }
    out
}

pub fn simulate(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, SimulateConfig) = load(flags, "simulate")?;
    let replicas = g.replicas.unwrap_or(1000);
    if c.capacities.is_empty() {
        return Err(CliError::Config("simulate.capacities: empty".into()));
    }
    let mut top = Output::create(&g.out)?;
    let mut summary_csv = String::from("N,half_width,survival,se,mean_extinction_time,extinct,window_exit_warning\n");
    let mut records = Vec::new();
    let mut failure = None;
    for &n in &c.capacities {
        let p = params(c.inner, c.outer, n, c.range)?;
        let half_width = c.half_width.unwrap_or_else(|| auto_half_width(&p, c.block, c.horizon));
        let mut cfg = SimConfig::new(p, half_width, c.horizon, g.seed);
        cfg.boundary = c.boundary;
        cfg.initial = if c.block == 0 { InitialCondition::SingleFullPatch } else { InitialCondition::Block(c.block) };
        cfg.sample_interval = Some(c.sample_interval);
        cfg.max_events = Some(c.max_events);
        cfg.validate().map_err(config("simulate"))?;

        let dir = format!("N{n}");
        let mut out = Output::create(&g.out.join(&dir))?;
        let mut warning = false;
        let mut capped = 0;
        for i in 0..c.trajectories {
            let mut one = cfg.clone();
            one.seed = patchdyn_core::rng::replica_seed(g.seed, u64::from(i));
            let tr = run(&one).map_err(config("simulate"))?;
            warning |= tr.window_exit_warning;
            if matches!(tr.terminal, Terminal::EventCap { .. }) {
                capped += 1;
            }
            out.write(&format!("trajectory_{i}.csv"), &trajectory_csv(&tr.times, tr.window, &tr.snapshots))?;
        }
        let times = extinction_times_mc(&cfg, replicas).map_err(config("simulate"))?;
        let dead: Vec<f64> = times.iter().flatten().copied().collect();
        let survival = Estimate::from_successes(replicas - dead.len() as u64, replicas);
        let mean_ext = (!dead.is_empty()).then(|| Estimate::from_samples(&dead));
        writeln!(
            summary_csv,
            "{n},{half_width},{},{},{},{},{}",
            survival.mean,
            survival.se,
            mean_ext.map_or(String::new(), |e| e.mean.to_string()),
            dead.len(),
            u8::from(warning)
        )
        .unwrap();
        let summary = json!({
            "capacity": n,
            "half_width": half_width,
            "survival": est(&survival),
            "mean_extinction_time": mean_ext.as_ref().map(est),
            "window_exit_warning": warning,
            "event_capped_trajectories": capped,
        });
        let mut per = c.clone();
        per.capacities = vec![n];
        per.half_width = Some(half_width);
        out.finish(&experiment("simulate", &g, replicas, per), summary)?;
        records.push(format!("{dir}/record.json"));
        if capped > 0 && failure.is_none() {
            failure = Some(CliError::ResourceCap(format!("N={n}: {capped} trajectories hit max_events")));
        }
    }
    top.write("summary.csv", &summary_csv)?;
    let record = top.finish(&experiment("simulate", &g, replicas, c), json!({ "records": records }))?;
    Ok(Finished { record, failure })
}

// ---------------------------------------------------------------- meanfield

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialProfile {
    /// `level` on `x ≤ 0`, zero beyond.
    Step { level: f64 },
    Constant { level: f64 },
    /// `left` on `x ≤ split`, `right` beyond.
    TwoLevel { left: f64, right: f64, split: i64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldConfig {
    pub inner: f64,
    pub outer: f64,
    pub range: u32,
    pub half_width: u32,
    pub boundary: BoundaryPolicy,
    pub initial: InitialProfile,
    pub t_end: f64,
    pub dt: f64,
    /// Half-width of the core checked for front shape; the whole window when absent.
    pub core: Option<u32>,
    /// Slack allowed outside `[0, 1]` on the raw integrator output.
    pub range_tol: f64,
    pub ode: OdeOptions,
}

impl Default for MeanfieldConfig {
    fn default() -> Self {
        MeanfieldConfig {
            inner: 4.0,
            outer: 1.0,
            range: 1,
            half_width: 40,
            boundary: BoundaryPolicy::Lower,
            initial: InitialProfile::Step { level: 1.0 },
            t_end: 10.0,
            dt: 0.5,
            core: None,
            range_tol: 1e-9,
            ode: OdeOptions::default(),
        }
    }
}

pub fn meanfield(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, MeanfieldConfig) = load(flags, "meanfield")?;
    let p = params(c.inner, c.outer, 2, c.range)?;
    if !(c.t_end > 0.0 && c.dt > 0.0 && c.t_end.is_finite()) {
        return Err(CliError::Config("meanfield.t_end, meanfield.dt: must be positive".into()));
    }
    let w = Window::symmetric(c.half_width);
    let init = match c.initial {
        InitialProfile::Step { level } => Profile::step(w, c.boundary, level),
        InitialProfile::Constant { level } => Profile::constant(w, c.boundary, level),
        InitialProfile::TwoLevel { left, right, split } => Profile::two_level(w, c.boundary, left, right, split),
    };
    if !init.in_range(0.0) {
        return Err(CliError::Config("meanfield.initial: values must lie in [0, 1]".into()));
    }
    let solver = |e| CliError::Config(format!("meanfield: {e}"));
    let samples = integrate_sampled(&p, &init, c.t_end, c.dt, &c.ode).map_err(solver)?;
    let mut csv = String::from("t,x,u\n");
    for s in &samples {
        for x in w.sites() {
            writeln!(csv, "{},{x},{}", s.time, s.get(x)).unwrap();
        }
    }
    let mut raw = init.clone();
    let mut worst: f64 = 0.0;
    integrate_observed(&p, &mut raw, c.t_end, &c.ode, |step| {
        for &u in step.y1 {
            worst = worst.max(-u).max(u - 1.0);
        }
        ControlFlow::Continue(())
    })
    .map_err(solver)?;
    let core = c.core.map(Window::symmetric);
    let front = front_preserved(&p, &init, c.t_end, core, &c.ode).map_err(solver)?;

    let mut out = Output::create(&g.out)?;
    out.write("profile.csv", &csv)?;
    let summary = json!({
        "equilibria": equilibria(p.total_birth()),
        "two_patch_equilibria": two_patch_equilibria(&p),
        "max_excursion_outside_unit_interval": worst,
        "front_preserved": front,
        "samples": samples.len(),
    });
    let failure = (worst > c.range_tol)
        .then(|| CliError::Invariant(format!("profile left [0, 1] by {worst:e}")));
    let record = out.finish(&experiment("meanfield", &g, 0, c), summary)?;
    Ok(Finished { record, failure })
}

// ---------------------------------------------------------------- dual-check

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualCheckConfig {
    pub capacities: Vec<u32>,
    pub patches: Vec<u32>,
    /// Values taken by both `a` and `b`.
    pub rates: Vec<f64>,
    pub t: f64,
    /// At most this many failing instances are dumped as JSON lines.
    pub dump_limit: usize,
}

impl Default for DualCheckConfig {
    fn default() -> Self {
        DualCheckConfig { capacities: vec![1, 2, 3], patches: vec![1, 2, 3], rates: vec![0.0, 1.0, 3.0], t: 2.0, dump_limit: 10 }
    }
}

pub fn dual_check(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, DualCheckConfig) = load(flags, "dual_check")?;
    let seeds = g.replicas.unwrap_or(10_000);
    let report =
        duality_sweep(&c.capacities, &c.patches, &c.rates, c.t, seeds).map_err(config("dual_check"))?;
    let mut out = Output::create(&g.out)?;
    let mut csv = String::from("capacity,patches,a,b,seed\n");
    for &(n, m, a, b, s) in &report.failures {
        writeln!(csv, "{n},{m},{a},{b},{s}").unwrap();
    }
    out.write("failures.csv", &csv)?;
    for (i, &(n, m, a, b, s)) in report.failures.iter().take(c.dump_limit).enumerate() {
        let inst = MicroInstance::generate(n, m, a, b, c.t, s).map_err(config("dual_check"))?;
        out.write(&format!("failure_{i}.jsonl"), &inst.to_json_lines())?;
    }
    let summary = json!({ "instances": report.instances, "failures": report.failures.len() });
    let failure = (!report.failures.is_empty())
        .then(|| CliError::Invariant(format!("{} duality failures", report.failures.len())));
    let record = out.finish(&experiment("dual-check", &g, seeds, c), summary)?;
    Ok(Finished { record, failure })
}

// ---------------------------------------------------------------- agreement

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementCliConfig {
    pub inner: f64,
    pub outer: f64,
    pub capacities: Vec<u32>,
    pub range: u32,
    pub half_width: u32,
    /// Every patch starts with `round(density N)` occupied locations.
    pub density: f64,
    pub site: i64,
    pub t: f64,
    pub eps: f64,
    pub dual_replicas: u64,
    /// Use the limiting dual for the reference density.
    pub limiting: bool,
}

impl Default for AgreementCliConfig {
    fn default() -> Self {
        AgreementCliConfig {
            inner: 2.0,
            outer: 1.0,
            capacities: vec![1000],
            range: 1,
            half_width: 5,
            density: 0.6,
            site: 0,
            t: 1.0,
            eps: 0.1,
            dual_replicas: 10_000,
            limiting: true,
        }
    }
}

pub fn agreement(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, AgreementCliConfig) = load(flags, "agreement")?;
    let replicas = g.replicas.unwrap_or(1000);
    if !(0.0..=1.0).contains(&c.density) {
        return Err(CliError::Config("agreement.density: must lie in [0, 1]".into()));
    }
    let mut csv = String::from(
        "N,phi,phi_se,forward,forward_se,collision,collision_se,mean_gap,threshold,deviation_frequency,bound,truncated\n",
    );
    let mut rows = Vec::new();
    let mut failure = None;
    for &n in &c.capacities {
        let p = params(c.inner, c.outer, n, c.range)?;
        let cfg = AgreementConfig {
            params: p,
            half_width: c.half_width,
            initial: vec![(c.density * f64::from(n)).round() as u32; 2 * c.half_width as usize + 1],
            site: c.site,
            t: c.t,
            eps: c.eps,
            forward_replicas: replicas,
            dual_replicas: c.dual_replicas,
            seed: g.seed,
            limiting: c.limiting,
        };
        let r = occupation_agreement_mc(&cfg).map_err(config("agreement"))?;
        writeln!(
            csv,
            "{n},{},{},{},{},{},{},{},{},{},{},{}",
            r.phi.mean,
            r.phi.se,
            r.forward.mean,
            r.forward.se,
            r.collision.mean,
            r.collision.se,
            r.mean_gap,
            r.threshold,
            r.deviation_frequency.mean,
            r.bound,
            r.truncated
        )
        .unwrap();
        if failure.is_none() {
            if r.deviation_frequency.mean > r.bound {
                failure = Some(CliError::Invariant(format!(
                    "N={n}: deviation frequency {} above {}",
                    r.deviation_frequency.mean, r.bound
                )));
            } else if r.truncated > 0 {
                failure = Some(CliError::ResourceCap(format!("N={n}: {} dual paths truncated", r.truncated)));
            }
        }
        rows.push(json!({ "capacity": n, "report": r }));
    }
    let mut out = Output::create(&g.out)?;
    out.write("agreement.csv", &csv)?;
    let record = out.finish(&experiment("agreement", &g, replicas, c), json!({ "rows": rows }))?;
    Ok(Finished { record, failure })
}

// ---------------------------------------------------------------- isolated

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolatedConfig {
    pub inner: f64,
    pub outer: f64,
    pub capacity: u32,
    pub range: u32,
}

impl Default for IsolatedConfig {
    fn default() -> Self {
        IsolatedConfig { inner: 2.0, outer: 1.0, capacity: 5, range: 1000 }
    }
}

pub fn isolated(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, IsolatedConfig) = load(flags, "isolated")?;
    let replicas = g.replicas.unwrap_or(10_000);
    let p = params(c.inner, c.outer, c.capacity, c.range)?;
    let table = occupation_table(c.capacity, c.inner).map_err(config("isolated"))?;
    let solo = params(c.inner, 0.0, c.capacity, 1)?;
    let occ = origin_occupation_mc(&SimConfig::new(solo, 0, 1e12, g.seed), replicas).map_err(config("isolated"))?;
    let mut occ_csv = String::from("j,tau_exact,tau_mc,se\n");
    for r in &table {
        let e = occ.per_level[r.j as usize];
        writeln!(occ_csv, "{},{},{},{}", r.j, r.tau_exact, e.mean, e.se).unwrap();
    }
    let exports = export_count_mean(c.inner, c.outer, c.capacity).map_err(config("isolated"))?;
    let mc = collision_mc(&p, replicas, g.seed);
    let mut out = Output::create(&g.out)?;
    out.write("table.csv", &table_csv(&table))?;
    out.write("occupation.csv", &occ_csv)?;
    let summary = json!({
        "export_mean": exports,
        "collision_bound": collision_probability_bound(u64::from(c.range)),
        "survival_upper_bound": survival_upper_bound(&p),
        "collision_mc": mc,
    });
    let record = out.finish(&experiment("isolated", &g, replicas, c), summary)?;
    Ok(Finished { record, failure: None })
}

// ---------------------------------------------------------------- percolation

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub inner: f64,
    pub outer: f64,
    pub capacity: u32,
    pub eps: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercolationConfig {
    /// Closure probabilities, increasing.
    pub gammas: Vec<f64>,
    pub k: u32,
    pub depth: u32,
    /// `4 depth` when absent.
    pub width: Option<u32>,
    pub w0: Vec<i64>,
    /// Estimate `γ` from the spread block of a patch model instead.
    pub block: Option<BlockConfig>,
}

impl Default for PercolationConfig {
    fn default() -> Self {
        PercolationConfig {
            gammas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            k: 0,
            depth: 40,
            width: None,
            w0: vec![0],
            block: None,
        }
    }
}

pub fn percolation(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, PercolationConfig) = load(flags, "percolation")?;
    let replicas = g.replicas.unwrap_or(1000);
    if c.gammas.is_empty() || c.gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(CliError::Config("percolation.gammas: must be nonempty and increasing".into()));
    }
    let width = c.width.unwrap_or_else(|| default_width(c.depth));
    let rows = coupled_survival(&c.gammas, c.k, c.depth, width, &c.w0, replicas, g.seed)
        .map_err(config("percolation"))?;
    let violations = rows.iter().filter(|r| r.windows(2).any(|w| w[1] && !w[0])).count();
    let mut csv = String::from("gamma,survival,se\n");
    for (i, gamma) in c.gammas.iter().enumerate() {
        let e = Estimate::from_successes(rows.iter().filter(|r| r[i]).count() as u64, replicas);
        writeln!(csv, "{gamma},{},{}", e.mean, e.se).unwrap();
    }
    let field = UniformField::sample(c.depth, width, c.k, &mut replica_rng(g.seed, u64::MAX));
    let grid = field.grid(c.gammas[0]);
    let wet = evolve_wet(&grid, &c.w0).map_err(config("percolation"))?;

    let mut out = Output::create(&g.out)?;
    out.write("survival.csv", &csv)?;
    out.write("grid.csv", &grid.to_csv(&wet))?;
    let mut summary = json!({ "monotonicity_violations": violations });
    if let Some(b) = &c.block {
        let p = params(b.inner, b.outer, b.capacity, 1)?;
        let times = spread_block_times(&p, b.eps, b.horizon).map_err(config("percolation.block"))?;
        let density = good_event_density(spread_block_sampler(p, times), replicas, g.seed);
        let surv = survival_from_density(&density, c.k, c.depth, &c.w0, replicas, g.seed)
            .map_err(config("percolation.block"))?;
        summary["block"] = json!({ "times": times, "density": density, "survival": est(&surv) });
    }
    let failure = (violations > 0)
        .then(|| CliError::Invariant(format!("{violations} replicas survive at a larger γ but not a smaller one")));
    let record = out.finish(&experiment("percolation", &g, replicas, c), summary)?;
    Ok(Finished { record, failure })
}

// ---------------------------------------------------------------- phase-portrait

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub count: u32,
}

impl Axis {
    fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.start + self.step * f64::from(i)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePortraitConfig {
    pub a: Axis,
    pub b: Axis,
    pub range: u32,
    pub detector: DetectorOptions,
}

impl Default for PhasePortraitConfig {
    fn default() -> Self {
        PhasePortraitConfig {
            a: Axis { start: 0.5, step: 0.25, count: 31 },
            b: Axis { start: 0.25, step: 0.25, count: 24 },
            range: 1,
            detector: DetectorOptions::default(),
        }
    }
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Expansion => "expansion",
        Outcome::Retreat => "retreat",
        Outcome::Both => "both",
        Outcome::Inconclusive => "inconclusive",
    }
}

pub fn phase(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, PhasePortraitConfig) = load(flags, "phase_portrait")?;
    let (a, b) = (c.a.values(), c.b.values());
    if a.iter().chain(&b).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CliError::Config("phase_portrait: grid values must be finite and nonnegative".into()));
    }
    let cells = phase_portrait(&a, &b, c.range, &c.detector).map_err(config("phase_portrait"))?;
    let mut csv = String::from("a,b,outcome\n");
    let mut bad = Vec::new();
    for cell in &cells {
        writeln!(csv, "{},{},{}", cell.a, cell.b, outcome_name(cell.outcome)).unwrap();
        // sufficient regions at M = 1
        let wrong = cell.outcome == Outcome::Both
            || (c.range == 1
                && ((cell.outcome == Outcome::Expansion && cell.a + cell.b <= 4.0 && cell.b > 0.0)
                    || (cell.outcome == Outcome::Retreat && cell.a + cell.b / 2.0 > 4.0 && cell.b > 8.0 / 9.0)));
        if wrong {
            bad.push((cell.a, cell.b, outcome_name(cell.outcome)));
        }
    }
    let count = |o| cells.iter().filter(|c| c.outcome == o).count();
    let summary = json!({
        "cells": cells.len(),
        "expansion": count(Outcome::Expansion),
        "retreat": count(Outcome::Retreat),
        "inconclusive": count(Outcome::Inconclusive),
        "inconsistent": bad,
    });
    let mut out = Output::create(&g.out)?;
    out.write("phase.csv", &csv)?;
    let failure = (!bad.is_empty()).then(|| CliError::Invariant(format!("{} cells contradict the known regions", bad.len())));
    let record = out.finish(&experiment("phase-portrait", &g, 0, c), summary)?;
    Ok(Finished { record, failure })
}

// ---------------------------------------------------------------- range-study

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeStudyConfig {
    pub inner: f64,
    pub outer: f64,
    pub capacity: u32,
    /// Dispersal ranges, increasing.
    pub ranges: Vec<u32>,
    pub horizon: f64,
}

impl Default for RangeStudyConfig {
    fn default() -> Self {
        RangeStudyConfig { inner: 2.0, outer: 1.0, capacity: 5, ranges: vec![100, 1000, 10_000], horizon: 50.0 }
    }
}

pub fn range_study(flags: &GlobalFlags) -> Result<Finished, CliError> {
    let (g, c): (Globals, RangeStudyConfig) = load(flags, "range_study")?;
    let replicas = g.replicas.unwrap_or(10_000);
    if c.ranges.is_empty() || c.ranges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("range_study.ranges: must be nonempty and increasing".into()));
    }
    let mut csv = String::from("M,p_survive,se,bound\n");
    let mut bad = Vec::new();
    for &m in &c.ranges {
        let p = params(c.inner, c.outer, c.capacity, m)?;
        let bound = survival_upper_bound(&p);
        let cfg = SimConfig::new(p, auto_half_width(&p, 0, c.horizon), c.horizon, g.seed);
        let e = patchdyn_core::sim::survival_probability_mc(&cfg, replicas).map_err(config("range_study"))?;
        writeln!(csv, "{m},{},{},{bound}", e.mean, e.se).unwrap();
        if e.mean > bound + 3.0 * e.se {
            bad.push(m);
        }
    }
    let mut out = Output::create(&g.out)?;
    out.write("range.csv", &csv)?;
    let failure = (!bad.is_empty()).then(|| CliError::Invariant(format!("survival above the bound at M = {bad:?}")));
    let record = out.finish(&experiment("range-study", &g, replicas, c), json!({ "above_bound": bad }))?;
    Ok(Finished { record, failure })
}
