//! Searches for expansion and retreat of fronts.
//!
//! Expansion is looked for on windows with vacant ghosts and retreat on
//! windows with full ghosts. The truncated flows bound the flow on the whole
//! line from below and above respectively, so a crossing seen on the window
//! also happens on the line, no later than reported.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::equilibria::equilibria;
use super::ode::{OdeError, OdeOptions};
use super::profile::{integrate_observed, Field, Profile};
use crate::model::{BoundaryPolicy, ModelParams, Window};
use crate::stats::ls_slope;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("needs a + b > 4 (got {0})")]
    Subcritical(f64),
    #[error("level {level} is outside ({lo}, {hi})")]
    LevelOutOfRange { level: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontKind {
    Expansion,
    Retreat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontCertificate {
    pub kind: FrontKind,
    /// Expansion: the level `u`. Retreat: the low level `u_*`.
    pub u: f64,
    /// Retreat only: the high level `u^*`.
    pub u_upper: Option<f64>,
    pub t0: f64,
    pub params: ModelParams,
    pub half_width: u32,
    /// Retreat below `r = 4` holds by convention and needs no integration.
    pub axiomatic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Detection {
    Certified(FrontCertificate),
    /// No level on the grid crossed before the horizon.
    Inconclusive,
    /// The parameters do not admit the behaviour being searched for.
    NotApplicable,
}

impl Detection {
    pub fn certificate(&self) -> Option<&FrontCertificate> {
        match self {
            Detection::Certified(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorOptions {
    /// Number of evenly spaced expansion levels inside `(u-, u+)`.
    pub levels: usize,
    /// Number of levels on each side for retreat pairs.
    pub retreat_levels: usize,
    /// Core half-width `L` around the origin.
    pub core: u32,
    pub horizon: f64,
    /// Fixed window half-width; sized from the spread bound when `None`.
    pub half_width: Option<u32>,
    /// Give up once the right side is below this in sup norm.
    pub stationary_tol: f64,
    pub ode: OdeOptions,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        DetectorOptions {
            levels: 33,
            retreat_levels: 8,
            core: 1,
            horizon: 40.0,
            half_width: None,
            stationary_tol: 1e-10,
            ode: OdeOptions::default(),
        }
    }
}

/// Exponential growth rate of `sum exp(theta y)` over the influence set:
/// `2a + (b/M) sum_{0<|y|<=M} exp(theta y) - 1`, births adding two points.
pub fn growth_exponent(p: &ModelParams, theta: f64) -> f64 {
    let m = p.range;
    let s: f64 = (1..=m).map(|d| 2.0 * (theta * f64::from(d)).cosh()).sum();
    2.0 * p.inner + p.outer / f64::from(m) * s - 1.0
}

/// Default `theta` grid: 4000 log-spaced points from `1e-4/M` to 20. The
/// minimiser sits near `1/M` for long ranges.
pub fn default_theta_grid(range: u32) -> Vec<f64> {
    let lo = (1e-4 / f64::from(range.max(1))).ln();
    let hi = 20f64.ln();
    (0..4000).map(|k| (lo + (hi - lo) * k as f64 / 3999.0).exp()).collect()
}

/// Smallest `c` on the grid with `theta c - l(theta) >= gamma`.
pub fn spread_rate_bound(p: &ModelParams, thetas: &[f64], gamma: f64) -> f64 {
    if p.outer == 0.0 {
        return 0.0;
    }
    thetas
        .iter()
        .filter(|&&th| th > 0.0)
        .map(|&th| (growth_exponent(p, th) + gamma) / th)
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min)
}

/// `L + ceil(c T) + 2M` with `c` from the spread bound at `gamma = 1`.
pub fn auto_half_width(p: &ModelParams, core: u32, horizon: f64) -> u32 {
    let c = spread_rate_bound(p, &default_theta_grid(p.range), 1.0);
    core + (c * horizon).ceil() as u32 + 2 * p.range
}

#[derive(Clone, Copy)]
enum Direction {
    /// Looking for the probe to rise to the level.
    Up,
    /// Looking for the probe to fall to the level.
    Down,
}

/// Integrate `prof` until the probe site crosses `level` or the crossing is
/// shown to be impossible, or the horizon passes.
///
/// Impossibility uses comparison with a profile `w` whose right side has a
/// fixed sign. When searching upward, `w = max(u(t), c)` with `rhs(w) <= 0`
/// stays above the solution forever and bounds the probe from above; when
/// searching downward, `w = min(u(t), c)` with `rhs(w) >= 0` bounds it from
/// below. The clipping constants are the `barriers`. A near-stationary
/// solution is abandoned as well.
fn first_crossing(
    p: &ModelParams,
    mut prof: Profile,
    probe: i64,
    level: f64,
    dir: Direction,
    barriers: &[f64],
    opts: &DetectorOptions,
) -> Result<Option<f64>, OdeError> {
    let idx = prof.window.index(probe).expect("probe inside window");
    let hit = move |v: f64| match dir {
        Direction::Up => v >= level,
        Direction::Down => v <= level,
    };
    if hit(prof.u[idx]) {
        return Ok(Some(0.0));
    }
    let n = prof.u.len();
    let mut field = Field::new(p, prof.boundary, n);
    let mut du = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut found = None;
    let mut steps = 0u64;
    integrate_observed(p, &mut prof, opts.horizon, &opts.ode, |step| {
        if let Some(t) = step.locate(idx, 1e-10, hit) {
            found = Some(t);
            return ControlFlow::Break(());
        }
        steps += 1;
        if !steps.is_multiple_of(8) {
            return ControlFlow::Continue(());
        }
        field.eval(step.y1, &mut du);
        if du.iter().all(|d| d.abs() < opts.stationary_tol) {
            return ControlFlow::Break(());
        }
        let one_signed = match dir {
            Direction::Up => du.iter().all(|&d| d <= 0.0),
            Direction::Down => du.iter().all(|&d| d >= 0.0),
        };
        if one_signed {
            return ControlFlow::Break(());
        }
        // when searching downward, sites beyond a cut to the right of the
        // probe may also be lowered to zero
        let cuts: Vec<usize> = match dir {
            Direction::Up => vec![n],
            Direction::Down => {
                let mut v = vec![n];
                for &c in barriers {
                    if let Some(j) = step.y1[idx..].iter().position(|&x| x < c * 0.5) {
                        v.push(idx + j);
                    }
                }
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        for &c in barriers {
            for &cut in &cuts {
                for (i, (wi, &ui)) in w.iter_mut().zip(step.y1).enumerate() {
                    *wi = match dir {
                        Direction::Up => ui.max(c),
                        Direction::Down if i >= cut => 0.0,
                        Direction::Down => ui.min(c),
                    };
                }
                if hit(w[idx]) {
                    continue;
                }
                field.eval(&w, &mut du);
                let blocked = match dir {
                    Direction::Up => du.iter().all(|&d| d <= 0.0),
                    Direction::Down => du.iter().all(|&d| d >= 0.0),
                };
                if blocked {
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(found)
}

/// Levels strictly inside `(lo, hi)`, evenly spaced.
fn interior_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| lo + (hi - lo) * k as f64 / (count + 1) as f64).collect()
}

/// Expansion levels in scan order: from the top of the interval down.
pub fn expansion_levels(r: f64, count: usize) -> Option<Vec<f64>> {
    let (lo, hi) = equilibria(r).positive_pair()?;
    let mut v = interior_levels(lo, hi, count);
    v.reverse();
    Some(v)
}

fn window_for(p: &ModelParams, opts: &DetectorOptions) -> u32 {
    opts.half_width.unwrap_or_else(|| auto_half_width(p, opts.core.max(1), opts.horizon))
}

/// Look for a level `u` in `(u-, u+)` such that the step `u 1(x <= 0)`
/// raises site 1 to `u`.
pub fn detect_expansion(p: &ModelParams, opts: &DetectorOptions) -> Result<Detection, DetectError> {
    let r = p.total_birth();
    if r <= 4.0 {
        return Ok(Detection::NotApplicable);
    }
    let levels = expansion_levels(r, opts.levels).expect("r > 4");
    detect_expansion_on(p, &levels, opts)
}

/// As [`detect_expansion`] with an explicit level list, scanned in order.
pub fn detect_expansion_on(p: &ModelParams, levels: &[f64], opts: &DetectorOptions) -> Result<Detection, DetectError> {
    let r = p.total_birth();
    let Some((lo, hi)) = equilibria(r).positive_pair().filter(|_| r > 4.0) else {
        return Ok(Detection::NotApplicable);
    };
    let k = window_for(p, opts);
    let window = Window::symmetric(k);
    // below u- the reaction is negative, so these clip from above
    let barriers = interior_levels(0.0, lo, 4);
    for &u in levels {
        if !(lo < u && u < hi) {
            return Err(DetectError::LevelOutOfRange { level: u, lo, hi });
        }
        let prof = Profile::step(window, BoundaryPolicy::Lower, u);
        if let Some(t0) = first_crossing(p, prof, 1, u, Direction::Up, &barriers, opts)? {
            return Ok(Detection::Certified(FrontCertificate {
                kind: FrontKind::Expansion,
                u,
                u_upper: None,
                t0,
                params: *p,
                half_width: k,
                axiomatic: false,
            }));
        }
    }
    Ok(Detection::Inconclusive)
}

/// Retreat pairs `(u_*, u^*)` in scan order: pairs hugging the equilibria
/// come first.
pub fn retreat_pairs(r: f64, count: usize) -> Option<Vec<(f64, f64)>> {
    let (lo, hi) = equilibria(r).positive_pair()?;
    let mut low = interior_levels(0.0, lo, count);
    low.reverse();
    let high = interior_levels(hi, 1.0, count);
    let mut pairs: Vec<(usize, usize)> = (0..count).flat_map(|i| (0..count).map(move |j| (i, j))).collect();
    pairs.sort_by_key(|&(i, j)| (i + j, i));
    Some(pairs.into_iter().map(|(i, j)| (low[i], high[j])).collect())
}

/// Look for levels `u_* < u- <= u+ < u^*` such that the two-level step
/// `u^* 1(x < 0) + u_* 1(x >= 0)` lowers site -1 to `u_*`.
pub fn detect_retreat(p: &ModelParams, opts: &DetectorOptions) -> Result<Detection, DetectError> {
    let r = p.total_birth();
    if r < 4.0 {
        return Ok(Detection::Certified(FrontCertificate {
            kind: FrontKind::Retreat,
            u: 0.0,
            u_upper: None,
            t0: 0.0,
            params: *p,
            half_width: 0,
            axiomatic: true,
        }));
    }
    let pairs = retreat_pairs(r, opts.retreat_levels).expect("r >= 4");
    let (lo, hi) = equilibria(r).positive_pair().expect("r >= 4");
    // between u- and u+ the reaction is positive, so these clip from below
    let barriers = interior_levels(lo, hi, 4);
    let k = window_for(p, opts);
    let window = Window::symmetric(k);
    for (low, high) in pairs {
        let prof = Profile::two_level(window, BoundaryPolicy::Upper, high, low, 0);
        if let Some(t0) = first_crossing(p, prof, -1, low, Direction::Down, &barriers, opts)? {
            return Ok(Detection::Certified(FrontCertificate {
                kind: FrontKind::Retreat,
                u: low,
                u_upper: Some(high),
                t0,
                params: *p,
                half_width: k,
                axiomatic: false,
            }));
        }
    }
    Ok(Detection::Inconclusive)
}

/// Slope of the rightmost crossing of `level` against time over the second
/// half of the horizon, starting from `u+ 1(x <= 0)`.
pub fn front_speed_estimate(p: &ModelParams, level: f64, horizon: f64, opts: &OdeOptions) -> Result<f64, DetectError> {
    let r = p.total_birth();
    let Some((lo, hi)) = equilibria(r).positive_pair().filter(|_| r > 4.0) else {
        return Err(DetectError::Subcritical(r));
    };
    if !(lo < level && level < hi) {
        return Err(DetectError::LevelOutOfRange { level, lo, hi });
    }
    let c = spread_rate_bound(p, &default_theta_grid(p.range), 1.0);
    let k = (c * horizon).ceil() as u32 + 2 * p.range + 10;
    let window = Window::symmetric(k);
    let prof = Profile::step(window, BoundaryPolicy::Lower, hi);
    let samples = 200usize;
    let dt = horizon / samples as f64;
    let snaps = super::profile::integrate_sampled(p, &prof, horizon, dt, opts)?;
    let position = |u: &[f64]| -> f64 {
        match u.iter().rposition(|&v| v >= level) {
            None => window.lo as f64,
            Some(i) if i + 1 == u.len() => window.hi as f64,
            Some(i) => window.site(i) as f64 + (u[i] - level) / (u[i] - u[i + 1]),
        }
    };
    let (ts, xs): (Vec<f64>, Vec<f64>) = snaps
        .iter()
        .filter(|s| s.time >= 0.5 * horizon)
        .map(|s| (s.time, position(&s.u)))
        .unzip();
    Ok(ls_slope(&ts, &xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Expansion,
    Retreat,
    /// Both detectors fired, which the detectors' soundness rules out.
    Both,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub a: f64,
    pub b: f64,
    pub outcome: Outcome,
    pub expansion: Detection,
    pub retreat: Detection,
}

pub fn classify(p: &ModelParams, opts: &DetectorOptions) -> Result<PhaseCell, DetectError> {
    let expansion = detect_expansion(p, opts)?;
    let retreat = detect_retreat(p, opts)?;
    let outcome = match (expansion.certificate().is_some(), retreat.certificate().is_some()) {
        (true, true) => Outcome::Both,
        (true, false) => Outcome::Expansion,
        (false, true) => Outcome::Retreat,
        (false, false) => Outcome::Inconclusive,
    };
    Ok(PhaseCell { a: p.inner, b: p.outer, outcome, expansion, retreat })
}

/// Classify every `(a, b)` on the grid, row-major in `a`.
pub fn phase_portrait(
    a_grid: &[f64],
    b_grid: &[f64],
    range: u32,
    opts: &DetectorOptions,
) -> Result<Vec<PhaseCell>, DetectError> {
    let cells: Vec<(f64, f64)> = a_grid.iter().flat_map(|&a| b_grid.iter().map(move |&b| (a, b))).collect();
    cells
        .par_iter()
        .map(|&(a, b)| {
            let p = ModelParams { inner: a, outer: b, capacity: 2, range };
            classify(&p, opts)
        })
        .collect()
}
