use patchdyn_core::isolated::{extinction_ks, BirthDeathChain, Flavor};
use patchdyn_core::sim::{coupled_run, extinction_times_mc, run, InitialCondition, SimConfig};
use patchdyn_core::{BoundaryPolicy, ModelParams};

#[test]
fn pure_death_mean_is_harmonic() {
    for n in [2u32, 5, 12] {
        let p = ModelParams::new(0.0, 0.0, n, 1).unwrap();
        let times = extinction_times_mc(&SimConfig::new(p, 0, 1e9, 3), 40_000).unwrap();
        let xs: Vec<f64> = times.iter().map(|t| t.expect("pure death dies out")).collect();
        let est = patchdyn_core::Estimate::from_samples(&xs);
        let want: f64 = (1..=n).map(|j| 1.0 / f64::from(j)).sum();
        assert!(est.within(want, 4.0), "N={n}: {} ± {} vs {want}", est.mean, est.se);
    }
}

#[test]
fn isolated_patch_extinction_law() {
    for (a, n) in [(3.0, 5u32), (6.0, 4)] {
        let p = ModelParams::new(a, 0.0, n, 1).unwrap();
        let times = extinction_times_mc(&SimConfig::new(p, 0, 1e9, 11), 100_000).unwrap();
        let mut xs: Vec<f64> = times.iter().map(|t| t.unwrap()).collect();
        let chain = BirthDeathChain::new(n, a, Flavor::Exact).unwrap();
        let d = extinction_ks(&chain, n, &mut xs).unwrap();
        assert!(d < 0.01, "a={a} N={n}: KS {d}");
    }
}

#[test]
fn everything_dies_without_births() {
    let p = ModelParams::new(0.0, 0.0, 6, 2).unwrap();
    let mut cfg = SimConfig::new(p, 8, 1e9, 5);
    cfg.initial = InitialCondition::Block(8);
    for s in 0..20 {
        cfg.seed = s;
        let tr = run(&cfg).unwrap();
        assert!(tr.extinct());
        assert_eq!(tr.event_count, 6 * 17);
    }
}

#[test]
fn coupling_keeps_order() {
    let lo = ModelParams::new(2.0, 1.0, 4, 2).unwrap();
    let hi = ModelParams::new(3.0, 2.0, 4, 2).unwrap();
    for boundary in [BoundaryPolicy::Lower, BoundaryPolicy::Upper] {
        for s in 0..20 {
            let mut c1 = SimConfig::new(lo, 6, 5.0, s);
            c1.boundary = boundary;
            c1.sample_interval = Some(0.1);
            let mut c2 = SimConfig::new(hi, 6, 5.0, s);
            c2.boundary = boundary;
            c2.initial = InitialCondition::Block(1);
            let run = coupled_run(&c1, &c2).unwrap();
            assert!(run.dominated, "violation at {:?}", run.first_violation);
            for (a, b) in run.lower.snapshots.iter().zip(&run.upper.snapshots) {
                assert!(a.iter().zip(b).all(|(x, y)| x <= y));
            }
        }
    }
}

#[test]
fn event_cap_stops_the_run() {
    let p = ModelParams::new(4.0, 2.0, 20, 1).unwrap();
    let mut cfg = SimConfig::new(p, 10, 100.0, 2);
    cfg.max_events = Some(25);
    let tr = run(&cfg).unwrap();
    assert_eq!(tr.event_count, 25);
    assert!(matches!(tr.terminal, patchdyn_core::sim::Terminal::EventCap { .. }));
}
