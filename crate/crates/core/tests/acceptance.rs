//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process exits nonzero when a criterion fails, except for the pinned red
//! subcheck of criterion 7 (see `criterion_7`).

use std::ops::ControlFlow;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use patchdyn_core::dual::micro::duality_sweep;
use patchdyn_core::dual::{collision_probability_mc, occupation_agreement_mc, phi_mc, AgreementConfig, ConstantField};
use patchdyn_core::isolated::{
    collision_mc, dominating_visits_closed, export_count_mean, geometric_visits, occupation_times_exact,
    occupation_times_rational, survival_upper_bound, weighted_occupation_bound_in, weighted_sum, BirthDeathChain,
    Flavor,
};
use patchdyn_core::meanfield::detect::auto_half_width;
use patchdyn_core::meanfield::profile::integrate_observed;
use patchdyn_core::meanfield::{
    equilibria, front_preserved, integrate, integrate_sampled, phase_portrait, truncation_error_ladder,
    two_patch_equilibria, DetectorOptions, OdeOptions, Outcome, Profile,
};
use patchdyn_core::model::Window;
use patchdyn_core::percolation::{
    coupled_survival, default_width, enumerate_survival, enumerated_probability, survival_probability_exact,
};
use patchdyn_core::sim::{origin_occupation_mc, survival_probability_mc, SimConfig};
use patchdyn_core::{BoundaryPolicy, ModelParams};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let r = duality_sweep(&[1, 2, 3], &[1, 2, 3], &[0.0, 1.0, 3.0], 2.0, 10_000).expect("valid sizes");
    let secs = start.elapsed().as_secs_f64();
    verdict(
        r.failures.is_empty() && secs < 300.0,
        format!("{} instances, {} failures, {secs:.1}s", r.instances, r.failures.len()),
    )
}

fn criterion_2() -> Verdict {
    let mut worst: f64 = 0.0;
    for r in [4.01, 4.5, 6.0, 8.0, 12.0] {
        for root in equilibria(r).roots {
            let u = root.u;
            worst = worst.max((r * u * u * (1.0 - u) - u).abs());
        }
    }
    let p = ModelParams::new(4.0, 1.0, 2, 1).unwrap();
    let (lo, hi) = two_patch_equilibria(&p).positive_pair().expect("r = 4.5");
    let gap = (lo - 1.0 / 3.0).abs().max((hi - 2.0 / 3.0).abs());
    verdict(worst <= 1e-12 && gap <= 1e-12, format!("max residual {worst:.1e}, two-patch root gap {gap:.1e}"))
}

fn criterion_3() -> Verdict {
    // constant data reduce the flow to u' = (a+b)u²(1−u) − u
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, b) in [(2.0, 1.0), (6.0, 2.0)] {
        let p = ModelParams::new(a, b, 2, 1).unwrap();
        for t in [1.0, 2.0] {
            let est = phi_mc(&p, &ConstantField(0.6), 0, t, 100_000, 31, None);
            let prof = Profile::constant(Window::symmetric(40), BoundaryPolicy::Lower, 0.6);
            let ode = integrate(&p, &prof, t, &OdeOptions::default()).unwrap().get(0);
            let z = (est.estimate.mean - ode).abs() / est.estimate.se;
            ok &= est.truncated == 0 && z <= 3.0;
            parts.push(format!("r={} t={t}: z={z:.2}", a + b));
        }
    }
    verdict(ok, parts.join(", "))
}

fn criterion_4() -> Verdict {
    let caps = [100u32, 1000, 10_000];
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, b) in [(1.0, 1.0), (2.0, 2.0)] {
        let p = ModelParams::new(a, b, 2, 1).unwrap();
        let (est, truncated) = collision_probability_mc(&p, &caps, 1.0, 10_000, 41);
        ok &= truncated == 0;
        for (k, &n) in caps.iter().enumerate() {
            let bound = (2.0 * (2.0 * (a + b)).exp() + 1.0) * f64::from(n).powf(-1.0 / 3.0);
            ok &= est[k].mean <= bound;
        }
        ok &= est.windows(2).all(|w| w[1].mean < w[0].mean);
        parts.push(format!("(a,b)=({a},{b}) P̂={:?}", est.iter().map(|e| e.mean).collect::<Vec<_>>()));
    }
    verdict(ok, parts.join(", "))
}

fn criterion_5() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [1000u32, 10_000] {
        let p = ModelParams::new(2.0, 1.0, n, 1).unwrap();
        let half_width = 5;
        let cfg = AgreementConfig {
            params: p,
            half_width,
            initial: vec![(0.6 * f64::from(n)).round() as u32; 2 * half_width as usize + 1],
            site: 0,
            t: 1.0,
            eps: 0.1,
            forward_replicas: 1000,
            dual_replicas: 10_000,
            seed: 51,
            limiting: true,
        };
        let r = occupation_agreement_mc(&cfg).unwrap();
        ok &= r.truncated == 0 && r.deviation_frequency.mean <= r.bound;
        parts.push(format!("N={n}: freq {} ≤ {:.2}", r.deviation_frequency.mean, r.bound));
    }
    verdict(ok, parts.join(", "))
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let a_grid: Vec<f64> = (0..31).map(|i| 0.5 + 0.25 * f64::from(i)).collect();
    let b_grid: Vec<f64> = (0..24).map(|j| 0.25 + 0.25 * f64::from(j)).collect();
    let cells = phase_portrait(&a_grid, &b_grid, 1, &DetectorOptions::default()).unwrap();
    let (mut missed_exp, mut missed_ret, mut both) = (0, 0, 0);
    for c in &cells {
        if c.a + c.b / 2.0 > 4.1 && c.b >= 1.0 && c.outcome != Outcome::Expansion {
            missed_exp += 1;
        }
        if c.a + c.b <= 4.0 && c.outcome != Outcome::Retreat {
            missed_ret += 1;
        }
        if c.outcome == Outcome::Both {
            both += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        missed_exp + missed_ret + both == 0 && secs < 1800.0,
        format!(
            "{} cells, {missed_exp} expansion misses, {missed_ret} retreat misses, {both} double certificates, {secs:.1}s",
            cells.len()
        ),
    )
}

/// Returns the verdict and whether every failure is the pinned one: the
/// stated geometric form of `v_j` disagrees with the exact visit counts of
/// the dominating chain, which are instead `(1+ρ)(1+…+ρ^{j−1})` below `N`
/// and `1+…+ρ^{N−1}` at `N`.
fn criterion_7() -> (Verdict, bool) {
    let mut mc_ok = true;
    let mut bound_ok = true;
    let mut closed_mismatch = Vec::new();
    let mut corrected_ok = true;
    let mut worst_z: f64 = 0.0;
    for a in [0i64, 2, 4, 6] {
        for n in [3u32, 5, 10] {
            let p = ModelParams::new(a as f64, 0.0, n, 1).unwrap();
            let occ = origin_occupation_mc(&SimConfig::new(p, 0, 1e12, 71), 100_000).unwrap();
            let tau = occupation_times_exact(n, a as f64).unwrap();
            for j in 1..=n as usize {
                let e = occ.per_level[j];
                worst_z = worst_z.max((e.mean - tau[j]).abs() / e.se);
                // 72 levels compared at once: 4 se keeps the family-wise false alarm under 0.5%
                mc_ok &= e.within(tau[j], 4.0);
            }
            mc_ok &= occ.extinct == occ.replicas;

            let rho = q(a, 4);
            let v = BirthDeathChain::new(n, a as f64, Flavor::Dominating).unwrap().expected_visits::<BigRational>(n).unwrap();
            if v != geometric_visits(&rho, n) {
                closed_mismatch.push(format!("(a={a},N={n})"));
            }
            corrected_ok &= v == dominating_visits_closed(&rho, n);

            let tau_q = occupation_times_rational(n, a as f64, Flavor::Exact).unwrap();
            bound_ok &= weighted_sum(&tau_q) <= weighted_occupation_bound_in(&rho, n);
        }
    }
    let pass = mc_ok && bound_ok && closed_mismatch.is_empty();
    let detail = format!(
        "occupation MC worst z={worst_z:.2} ({}), Σjτ_j bound ({}), geometric v_j form ({}{})",
        if mc_ok { "ok" } else { "FAIL" },
        if bound_ok { "ok" } else { "FAIL" },
        if closed_mismatch.is_empty() { "ok".to_string() } else { format!("FAIL at {}", closed_mismatch.join(" ")) },
        if corrected_ok { "; exact visits match the corrected closed form" } else { "" },
    );
    let pinned = mc_ok && bound_ok && corrected_ok && closed_mismatch.len() == 9;
    (verdict(pass, detail), pinned)
}

fn criterion_8() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [100u32, 1000, 10_000] {
        let p = ModelParams::new(2.0, 1.0, 5, m).unwrap();
        let bound = survival_upper_bound(&p);
        let cfg = SimConfig::new(p, auto_half_width(&p, 0, 50.0), 50.0, 81);
        let surv = survival_probability_mc(&cfg, 10_000).unwrap();
        let mf = f64::from(m).powf(-1.0 / 3.0);
        let chain = 0.5 * mf + mf * export_count_mean(2.0, 1.0, 5).unwrap().closed_form;
        let coll = collision_mc(&p, 10_000, 82).collision;
        ok &= surv.mean <= bound + 3.0 * surv.se && coll.mean <= chain;
        parts.push(format!("M={m}: survival {} ≤ {bound:.3}, collision {} ≤ {chain:.3}", surv.mean, coll.mean));
    }
    verdict(ok, parts.join(", "))
}

fn random_profile(rng: &mut ChaCha8Rng, window: Window, boundary: BoundaryPolicy) -> Profile {
    Profile::new(window, (0..window.len()).map(|_| rng.random::<f64>()).collect(), boundary)
}

fn criterion_9() -> Verdict {
    let tol = 1e-9;
    let opts = OdeOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let window = Window::symmetric(30);

    // monotone coupling
    let mut monotone = true;
    for boundary in [BoundaryPolicy::Lower, BoundaryPolicy::Upper] {
        for _ in 0..4 {
            let lo = ModelParams::new(2.0 + rng.random::<f64>(), rng.random::<f64>() * 2.0, 2, 2).unwrap();
            let hi = ModelParams::new(lo.inner + rng.random::<f64>(), lo.outer + rng.random::<f64>(), 2, 2).unwrap();
            let u0 = random_profile(&mut rng, window, boundary);
            let v0 = Profile::new(window, u0.u.iter().map(|&u| (u + 0.3 * rng.random::<f64>()).min(1.0)).collect(), boundary);
            let us = integrate_sampled(&lo, &u0, 10.0, 0.25, &opts).unwrap();
            let vs = integrate_sampled(&hi, &v0, 10.0, 0.25, &opts).unwrap();
            monotone &= us.iter().zip(&vs).all(|(u, v)| u.u.iter().zip(&v.u).all(|(a, b)| *a <= b + 10.0 * tol));
        }
    }

    // the unit interval is invariant
    let mut in_range = true;
    for boundary in [BoundaryPolicy::Lower, BoundaryPolicy::Upper] {
        for _ in 0..4 {
            let p = ModelParams::new(8.0 * rng.random::<f64>(), 6.0 * rng.random::<f64>(), 2, 3).unwrap();
            let mut prof = random_profile(&mut rng, window, boundary);
            integrate_observed(&p, &mut prof, 10.0, &opts, |step| {
                in_range &= step.y1.iter().all(|&u| (-tol..=1.0 + tol).contains(&u));
                ControlFlow::Continue(())
            })
            .unwrap();
        }
    }

    // shifting data and window together shifts the solution
    let mut equivariant = true;
    let p = ModelParams::new(4.0, 2.0, 2, 2).unwrap();
    let base = random_profile(&mut rng, window, BoundaryPolicy::Lower);
    let out = integrate(&p, &base, 5.0, &opts).unwrap();
    for z in [-7i64, 3, 11] {
        let shifted = Profile::new(Window::new(window.lo + z, window.hi + z).unwrap(), base.u.clone(), BoundaryPolicy::Lower);
        let s_out = integrate(&p, &shifted, 5.0, &opts).unwrap();
        equivariant &= window.sites().all(|x| (s_out.get(x + z) - out.get(x)).abs() <= 1e-15);
    }

    // step data stay wave fronts away from the edges
    let mut fronts = true;
    for (a, b, m) in [(4.0, 1.0, 1), (3.0, 1.0, 1), (6.0, 2.0, 2), (2.0, 3.0, 3)] {
        let p = ModelParams::new(a, b, 2, m).unwrap();
        let prof = Profile::step(Window::symmetric(60), BoundaryPolicy::Lower, 1.0);
        fronts &= front_preserved(&p, &prof, 10.0, Some(Window::symmetric(20)), &opts).unwrap();
    }

    // truncation ladder
    let p = ModelParams::new(4.0, 2.0, 2, 1).unwrap();
    let init = Profile::step(Window::symmetric(40), BoundaryPolicy::Lower, 1.0);
    let lad = truncation_error_ladder(&p, &init, &[10, 20, 40], 3, 5.0, &opts, 10.0 * tol).unwrap();
    let ladder = lad.lower_monotone
        && lad.upper_monotone
        && lad.lower_gaps.windows(2).all(|w| w[1] < w[0])
        && lad.upper_gaps.windows(2).all(|w| w[1] < w[0]);

    let flag = |b: bool| if b { "ok" } else { "FAIL" };
    verdict(
        monotone && in_range && equivariant && fronts && ladder,
        format!(
            "monotone {}, [0,1] {}, translation {}, wave front {}, ladder {} (gaps {:.1e}/{:.1e})",
            flag(monotone),
            flag(in_range),
            flag(equivariant),
            flag(fronts),
            flag(ladder),
            lad.upper_gaps[0],
            lad.upper_gaps[1]
        ),
    )
}

fn criterion_10() -> Verdict {
    let mut exact = true;
    let mut compared = 0;
    for w0 in [vec![0i64], vec![0, 2]] {
        for depth in 1..=4u32 {
            let counts = enumerate_survival(depth, 9, &w0).unwrap();
            for g in [q(1, 5), q(1, 2)] {
                exact &= enumerated_probability(&counts, &g) == survival_probability_exact(depth, 9, &w0, &g).unwrap();
                compared += 1;
            }
        }
    }
    let gammas: Vec<f64> = (0..=12).map(|i| 0.05 * f64::from(i)).collect();
    let mut violations = 0;
    for k in [0u32, 2] {
        let rows = coupled_survival(&gammas, k, 40, default_width(40), &[0], 1000, 101).unwrap();
        violations += rows.iter().filter(|r| r.windows(2).any(|w| w[1] && !w[0])).count();
    }
    verdict(
        exact && violations == 0,
        format!("{compared} exact comparisons {}, {violations} coupled monotonicity violations", if exact { "equal" } else { "DIFFER" }),
    )
}

fn main() {
    let mut reds = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        println!("criterion {n:>2}: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            reds.push(n);
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    let (v7, pinned) = criterion_7();
    report(7, v7);
    report(8, criterion_8());
    report(9, criterion_9());
    report(10, criterion_10());

    let unexpected: Vec<usize> = reds.iter().copied().filter(|&n| !(n == 7 && pinned)).collect();
    if reds.contains(&7) && pinned {
        println!("criterion  7 is red by analysis: the geometric v_j form does not solve the visit equations for a ≠ 0");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
