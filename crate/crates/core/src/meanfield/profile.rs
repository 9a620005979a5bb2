use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::ode::{self, DenseStep, OdeError, OdeOptions};
use crate::model::{BoundaryPolicy, ModelParams, Window};

/// Densities on a finite window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub window: Window,
    pub u: Vec<f64>,
    pub boundary: BoundaryPolicy,
    pub time: f64,
}

impl Profile {
    pub fn new(window: Window, u: Vec<f64>, boundary: BoundaryPolicy) -> Self {
        assert_eq!(u.len(), window.len(), "density vector does not match window");
        Profile { window, u, boundary, time: 0.0 }
    }

    pub fn from_fn(window: Window, boundary: BoundaryPolicy, f: impl Fn(i64) -> f64) -> Self {
        Profile::new(window, window.sites().map(f).collect(), boundary)
    }

    pub fn constant(window: Window, boundary: BoundaryPolicy, c: f64) -> Self {
        Profile::from_fn(window, boundary, |_| c)
    }

    /// `level` on `x <= 0`, zero to the right.
    pub fn step(window: Window, boundary: BoundaryPolicy, level: f64) -> Self {
        Profile::two_level(window, boundary, level, 0.0, 0)
    }

    /// `left` for `x < split`, `right` from `split` on.
    pub fn two_level(window: Window, boundary: BoundaryPolicy, left: f64, right: f64, split: i64) -> Self {
        Profile::from_fn(window, boundary, |x| if x < split { left } else { right })
    }

    /// Density at `x`, reading ghosts beyond the window.
    pub fn get(&self, x: i64) -> f64 {
        match self.window.index(x) {
            Some(i) => self.u[i],
            None => self.boundary.ghost_density(),
        }
    }

    /// Restriction to a sub-window.
    pub fn restrict(&self, window: Window) -> Profile {
        Profile { window, u: window.sites().map(|x| self.get(x)).collect(), boundary: self.boundary, time: self.time }
    }

    pub fn in_range(&self, tol: f64) -> bool {
        self.u.iter().all(|&v| (-tol..=1.0 + tol).contains(&v))
    }
}

/// Right side of the lattice equation on a window with constant ghosts.
pub struct MeanField {
    a: f64,
    per_nbr: f64,
    m: usize,
    ghost_sq: f64,
    sq_prefix: Vec<f64>,
}

impl MeanField {
    pub fn new(p: &ModelParams, boundary: BoundaryPolicy, len: usize) -> Self {
        let g = boundary.ghost_density();
        let m = p.range as usize;
        MeanField {
            a: p.inner,
            per_nbr: p.outer / (2.0 * m as f64),
            m,
            ghost_sq: g * g,
            sq_prefix: vec![0.0; len + 2 * m + 1],
        }
    }

    pub fn eval(&mut self, u: &[f64], du: &mut [f64]) {
        let n = u.len();
        let m = self.m;
        if self.per_nbr == 0.0 {
            for i in 0..n {
                du[i] = self.a * u[i] * u[i] * (1.0 - u[i]) - u[i];
            }
            return;
        }
        // prefix[j] = sum of squares over extended indices 0..j, where
        // extended index e corresponds to site index e - m
        let pre = &mut self.sq_prefix;
        pre[0] = 0.0;
        for e in 0..n + 2 * m {
            let sq = if e < m || e >= n + m { self.ghost_sq } else { u[e - m] * u[e - m] };
            pre[e + 1] = pre[e] + sq;
        }
        for i in 0..n {
            // neighbours i-m..=i+m except i, in extended indices i..=i+2m
            let s = pre[i + 2 * m + 1] - pre[i] - u[i] * u[i];
            du[i] = (self.a * u[i] * u[i] + self.per_nbr * s) * (1.0 - u[i]) - u[i];
        }
    }
}

/// Right side evaluated site by site; the reference for the faster kernels
/// used inside the integrator.
pub fn rhs(p: &ModelParams, prof: &Profile) -> Vec<f64> {
    let m = i64::from(p.range);
    let per_nbr = p.outer / (2.0 * m as f64);
    prof.window
        .sites()
        .map(|x| {
            let ux = prof.get(x);
            let s: f64 = (1..=m).map(|d| prof.get(x - d).powi(2) + prof.get(x + d).powi(2)).sum();
            (p.inner * ux * ux + per_nbr * s) * (1.0 - ux) - ux
        })
        .collect()
}

/// Right side with neighbour sums taken directly, `O(M)` per site.
pub(crate) struct DirectField {
    a: f64,
    per_nbr: f64,
    m: usize,
    ghost_sq: f64,
}

impl DirectField {
    fn eval(&self, u: &[f64], du: &mut [f64]) {
        let n = u.len();
        let sq = |j: isize| {
            if j < 0 || j >= n as isize {
                self.ghost_sq
            } else {
                u[j as usize] * u[j as usize]
            }
        };
        for i in 0..n {
            let s: f64 = (1..=self.m as isize).map(|d| sq(i as isize - d) + sq(i as isize + d)).sum();
            du[i] = (self.a * u[i] * u[i] + self.per_nbr * s) * (1.0 - u[i]) - u[i];
        }
    }
}

/// Right-side kernel picked by range: direct sums for short ranges, prefix
/// sums for long ones.
pub(crate) enum Field {
    Direct(DirectField),
    Prefix(MeanField),
}

impl Field {
    pub(crate) fn new(p: &ModelParams, boundary: BoundaryPolicy, len: usize) -> Field {
        if p.range <= 8 {
            let g = boundary.ghost_density();
            Field::Direct(DirectField {
                a: p.inner,
                per_nbr: p.outer / (2.0 * f64::from(p.range)),
                m: p.range as usize,
                ghost_sq: g * g,
            })
        } else {
            Field::Prefix(MeanField::new(p, boundary, len))
        }
    }

    pub(crate) fn eval(&mut self, u: &[f64], du: &mut [f64]) {
        match self {
            Field::Direct(f) => f.eval(u, du),
            Field::Prefix(f) => f.eval(u, du),
        }
    }
}

/// Integrate the truncated system, calling `observe` on every accepted step.
/// The profile is advanced in place and clamped to `[0, 1]` afterwards.
pub fn integrate_observed<O>(
    p: &ModelParams,
    prof: &mut Profile,
    t_end: f64,
    opts: &OdeOptions,
    observe: O,
) -> Result<ode::OdeSummary, OdeError>
where
    O: FnMut(&DenseStep) -> ControlFlow<()>,
{
    let mut field = Field::new(p, prof.boundary, prof.u.len());
    let t0 = prof.time;
    let s = ode::integrate(|_, u, du| field.eval(u, du), t0, &mut prof.u, t0 + t_end, opts, observe)?;
    prof.time = s.t;
    for v in &mut prof.u {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(s)
}

/// Profile after time `t_end`.
pub fn integrate(p: &ModelParams, prof: &Profile, t_end: f64, opts: &OdeOptions) -> Result<Profile, OdeError> {
    let mut out = prof.clone();
    integrate_observed(p, &mut out, t_end, opts, |_| ControlFlow::Continue(()))?;
    Ok(out)
}

/// Profiles at `0, dt, 2dt, ...` up to `t_end`, read off the dense output.
pub fn integrate_sampled(
    p: &ModelParams,
    prof: &Profile,
    t_end: f64,
    dt: f64,
    opts: &OdeOptions,
) -> Result<Vec<Profile>, OdeError> {
    let t0 = prof.time;
    let count = (t_end / dt + 1e-9).floor() as usize;
    let mut out = vec![prof.clone()];
    let mut next = 1usize;
    let mut work = prof.clone();
    let template = prof.clone();
    integrate_observed(p, &mut work, t_end, opts, |step| {
        while next <= count && t0 + next as f64 * dt <= step.t1 + 1e-12 {
            let t = (t0 + next as f64 * dt).min(step.t1);
            let mut snap = template.clone();
            step.eval(t, &mut snap.u);
            for v in &mut snap.u {
                *v = v.clamp(0.0, 1.0);
            }
            snap.time = t;
            out.push(snap);
            next += 1;
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// Monotone nonincreasing in `x`, up to `tol`.
pub fn is_wave_front(prof: &Profile, tol: f64) -> bool {
    prof.u.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Whether the solution from `prof` stays a wave front at every accepted
/// step and at the end, checked on `core` (defaults to the whole window).
pub fn front_preserved(
    p: &ModelParams,
    prof: &Profile,
    t_end: f64,
    core: Option<Window>,
    opts: &OdeOptions,
) -> Result<bool, OdeError> {
    let core = core.unwrap_or(prof.window);
    let lo = prof.window.index(core.lo).expect("core inside window");
    let hi = prof.window.index(core.hi).expect("core inside window");
    let mut ok = is_wave_front(&prof.restrict(core), 1e-9);
    let mut work = prof.clone();
    integrate_observed(p, &mut work, t_end, opts, |step| {
        ok &= step.y1[lo..=hi].windows(2).all(|w| w[1] <= w[0] + 1e-9);
        if ok {
            ControlFlow::Continue(())
        } else {
            ControlFlow::Break(())
        }
    })?;
    Ok(ok)
}

/// Core values of the truncated flows for several window sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub half_widths: Vec<u32>,
    pub core: Window,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// Sup-norm gaps between consecutive window sizes on the core.
    pub lower_gaps: Vec<f64>,
    pub upper_gaps: Vec<f64>,
    /// Lower flows nondecreasing and upper flows nonincreasing in `K`.
    pub lower_monotone: bool,
    pub upper_monotone: bool,
}

/// Integrate the restriction of `initial` to `[-K, K]` for every `K` under
/// both policies and compare on `[-L, L]`. `initial` must cover the largest
/// window; `tol` is the slack allowed in the monotonicity checks.
pub fn truncation_error_ladder(
    p: &ModelParams,
    initial: &Profile,
    half_widths: &[u32],
    core_half_width: u32,
    t_end: f64,
    opts: &OdeOptions,
    tol: f64,
) -> Result<LadderReport, OdeError> {
    assert!(half_widths.windows(2).all(|w| w[0] < w[1]), "window sizes must increase");
    assert!(core_half_width <= half_widths[0], "core must sit inside the smallest window");
    let core = Window::symmetric(core_half_width);
    let run = |boundary: BoundaryPolicy| -> Result<Vec<Vec<f64>>, OdeError> {
        half_widths
            .iter()
            .map(|&k| {
                let mut start = initial.restrict(Window::symmetric(k));
                start.boundary = boundary;
                let end = integrate(p, &start, t_end, opts)?;
                Ok(end.restrict(core).u)
            })
            .collect()
    };
    let lower = run(BoundaryPolicy::Lower)?;
    let upper = run(BoundaryPolicy::Upper)?;
    let gaps = |v: &[Vec<f64>]| -> Vec<f64> {
        v.windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect()
    };
    let lower_monotone = lower.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| *a <= b + tol));
    let upper_monotone = upper.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| *b <= a + tol));
    Ok(LadderReport {
        half_widths: half_widths.to_vec(),
        core,
        lower_gaps: gaps(&lower),
        upper_gaps: gaps(&upper),
        lower,
        upper,
        lower_monotone,
        upper_monotone,
    })
}
