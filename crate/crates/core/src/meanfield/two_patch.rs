use std::ops::ControlFlow;

use super::equilibria::{equilibria, Equilibria};
use super::ode::{integrate, OdeError, OdeOptions};
use crate::model::ModelParams;

/// `F(u, v) = (a u^2 + (b/2) v^2)(1 - u) - u`.
pub fn two_patch_field(p: &ModelParams, u: f64, v: f64) -> f64 {
    (p.inner * u * u + 0.5 * p.outer * v * v) * (1.0 - u) - u
}

/// Equilibria on the diagonal, governed by `r = a + b/2`.
pub fn two_patch_equilibria(p: &ModelParams) -> Equilibria {
    equilibria(p.two_patch_rate())
}

/// Largest gap between `F(u, u)` and the factored cubic `-r u (u - u-)(u - u+)`
/// over a grid of `u`; `None` when the diagonal has no positive roots.
pub fn diagonal_factorization_gap(p: &ModelParams, grid: usize) -> Option<f64> {
    let r = p.two_patch_rate();
    let (lo, hi) = two_patch_equilibria(p).positive_pair()?;
    Some(
        (0..=grid)
            .map(|i| {
                let u = i as f64 / grid as f64;
                (two_patch_field(p, u, u) + r * u * (u - lo) * (u - hi)).abs()
            })
            .fold(0.0, f64::max),
    )
}

/// Solution of the symmetric two-patch system sampled every `dt`.
pub fn two_patch_flow(
    p: &ModelParams,
    start: (f64, f64),
    t_end: f64,
    dt: f64,
    opts: &OdeOptions,
) -> Result<Vec<(f64, f64, f64)>, OdeError> {
    let mut y = [start.0, start.1];
    let mut out = vec![(0.0, start.0, start.1)];
    let mut next = 1usize;
    let count = (t_end / dt + 1e-9).floor() as usize;
    integrate(
        |_, y, d| {
            d[0] = two_patch_field(p, y[0], y[1]);
            d[1] = two_patch_field(p, y[1], y[0]);
        },
        0.0,
        &mut y,
        t_end,
        opts,
        |step| {
            while next <= count && next as f64 * dt <= step.t1 + 1e-12 {
                let t = (next as f64 * dt).min(step.t1);
                out.push((t, step.eval_component(t, 0), step.eval_component(t, 1)));
                next += 1;
            }
            ControlFlow::Continue(())
        },
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_roots_for_four_and_one() {
        let p = ModelParams::new(4.0, 1.0, 2, 1).unwrap();
        let (lo, hi) = two_patch_equilibria(&p).positive_pair().unwrap();
        assert!((lo - 1.0 / 3.0).abs() < 1e-12);
        assert!((hi - 2.0 / 3.0).abs() < 1e-12);
        assert!(diagonal_factorization_gap(&p, 100).unwrap() < 1e-12);
    }

    #[test]
    fn origin_is_fixed() {
        let p = ModelParams::new(6.0, 2.5, 2, 1).unwrap();
        let path = two_patch_flow(&p, (0.0, 0.0), 5.0, 1.0, &OdeOptions::default()).unwrap();
        assert!(path.iter().all(|&(_, u, v)| u == 0.0 && v == 0.0));
    }
}
