//! Dormand–Prince 5(4) with step-size control and continuous output.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// First trial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Steps may not be larger than this.
    pub h_max: f64,
    pub max_steps: u64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { atol: 1e-9, rtol: 1e-9, h_init: None, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSummary {
    /// Time actually reached; less than the target if the observer stopped.
    pub t: f64,
    pub accepted: u64,
    pub rejected: u64,
    pub stopped: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its interpolant.
pub struct DenseStep<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y1: &'a [f64],
    rc: &'a [Vec<f64>; 5],
}

impl DenseStep<'_> {
    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let th = (t - self.t0) / (self.t1 - self.t0);
        let th1 = 1.0 - th;
        let rc = self.rc;
        rc[0][i] + th * (rc[1][i] + th1 * (rc[2][i] + th * (rc[3][i] + th1 * rc[4][i])))
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.eval_component(t, i);
        }
    }

    /// First time in the step where component `i` satisfies `hit`, located
    /// by bisection to `tol`. `hit` must hold at the right end for a
    /// crossing to be reported.
    pub fn locate(&self, i: usize, tol: f64, hit: impl Fn(f64) -> bool) -> Option<f64> {
        if hit(self.eval_component(self.t0, i)) {
            return Some(self.t0);
        }
        if !hit(self.eval_component(self.t1, i)) {
            return None;
        }
        let (mut lo, mut hi) = (self.t0, self.t1);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if hit(self.eval_component(mid, i)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

fn scaled_max(v: &[f64], y: &[f64], o: &OdeOptions) -> f64 {
    v.iter()
        .zip(y)
        .map(|(a, b)| a.abs() / (o.atol + o.rtol * b.abs()))
        .fold(0.0, f64::max)
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`, overwriting `y`.
/// `observe` sees every accepted step and may stop the integration.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y: &mut [f64],
    t_end: f64,
    opts: &OdeOptions,
    mut observe: O,
) -> Result<OdeSummary, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(&DenseStep) -> ControlFlow<()>,
{
    let n = y.len();
    let mut summary = OdeSummary { t: t0, accepted: 0, rejected: 0, stopped: false };
    if t_end <= t0 || n == 0 {
        return Ok(summary);
    }
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rc: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);

    let mut t = t0;
    f(t, y, &mut k[0]);
    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            let d0 = scaled_max(y, y, opts);
            let d1 = scaled_max(&k[0], y, opts);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            for i in 0..n {
                ytmp[i] = y[i] + h0 * k[0][i];
            }
            f(t + h0, &ytmp, &mut k[1]);
            for i in 0..n {
                err[i] = (k[1][i] - k[0][i]) / h0;
            }
            let d2 = scaled_max(&err, y, opts);
            let h1 = if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            };
            (100.0 * h0).min(h1)
        }
    }
    .min(opts.h_max);
    let mut last_rejected = false;

    loop {
        if summary.accepted + summary.rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps { t });
        }
        let finishing = t + h >= t_end;
        if finishing {
            h = t_end - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t, h });
        }
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k[0][i];
        }
        f(t + C2 * h, &ytmp, &mut k[1]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        f(t + C3 * h, &ytmp, &mut k[2]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        f(t + C4 * h, &ytmp, &mut k[3]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        f(t + C5 * h, &ytmp, &mut k[4]);
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
        }
        f(t + h, &ytmp, &mut k[5]);
        for i in 0..n {
            ynew[i] = y[i]
                + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        f(t + h, &ynew, &mut k[6]);
        let mut e = 0.0f64;
        for i in 0..n {
            let d = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            e = e.max(d.abs() / sc);
        }
        if !e.is_finite() {
            return Err(OdeError::NonFinite { t });
        }
        if e <= 1.0 {
            summary.accepted += 1;
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = h * k[0][i] - dy;
                rc[0][i] = y[i];
                rc[1][i] = dy;
                rc[2][i] = bspl;
                rc[3][i] = dy - h * k[6][i] - bspl;
                rc[4][i] = h
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
            }
            let t1 = if finishing { t_end } else { t + h };
            y.copy_from_slice(&ynew);
            let flow = observe(&DenseStep { t0: t, t1, y1: y, rc: &rc });
            t = t1;
            summary.t = t;
            k.swap(0, 6);
            if flow.is_break() {
                summary.stopped = true;
                return Ok(summary);
            }
            if finishing {
                return Ok(summary);
            }
            let mut fac = (0.9 * e.powf(-0.2)).clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.h_max);
            last_rejected = false;
        } else {
            summary.rejected += 1;
            h *= (0.9 * e.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut y = vec![1.0, 2.0];
        let s = integrate(|_, y, d| {
            d[0] = -y[0];
            d[1] = -2.0 * y[1];
        }, 0.0, &mut y, 3.0, &OdeOptions::default(), |_| ControlFlow::Continue(()))
        .unwrap();
        assert_eq!(s.t, 3.0);
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-9);
        assert!((y[1] - 2.0 * (-6.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn dense_output_tracks_the_solution() {
        let mut y = vec![0.0, 1.0];
        let mut worst = 0.0f64;
        integrate(|_, y, d| {
            d[0] = y[1];
            d[1] = -y[0];
        }, 0.0, &mut y, 10.0, &OdeOptions::default(), |step| {
            for j in 0..=10 {
                let t = step.t0 + (step.t1 - step.t0) * j as f64 / 10.0;
                worst = worst.max((step.eval_component(t, 0) - t.sin()).abs());
            }
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn observer_stops_at_crossing() {
        let mut y = vec![0.0];
        let mut hit = None;
        let s = integrate(|_, _, d| d[0] = 1.0, 0.0, &mut y, 10.0, &OdeOptions::default(), |step| {
            match step.locate(0, 1e-10, |v| v >= 2.5) {
                Some(t) => {
                    hit = Some(t);
                    ControlFlow::Break(())
                }
                None => ControlFlow::Continue(()),
            }
        })
        .unwrap();
        assert!(s.stopped);
        assert!((hit.unwrap() - 2.5).abs() < 1e-9);
    }
}
