use patchdyn_core::dual::{
    branching_moment_mc, collision_times, resolve_active, simulate_limiting_dual, simulate_n_dual, start_marks,
    ConstantField, DualConfig, DualKind,
};
use patchdyn_core::meanfield::detect::growth_exponent;
use patchdyn_core::ModelParams;

#[test]
fn collision_times_match_finite_duals() {
    let p = ModelParams::new(1.5, 1.0, 2, 1).unwrap();
    let caps = [2u32, 4, 8, 16];
    for seed in 0..200 {
        let times = collision_times(&p, &caps, 1.5, seed, 1_000_000).expect("small path");
        let marks = start_marks(seed, 2);
        let start = [(0, marks[0]), (0, marks[1])];
        for (k, &n) in caps.iter().enumerate() {
            let mut cfg = DualConfig::new(p, DualKind::Capacity(n), 1.5, seed);
            cfg.stop_at_collision = true;
            let iset = simulate_n_dual(&cfg, n, &start).unwrap();
            assert_eq!(iset.collision, times[k], "seed {seed} N={n}");
        }
        // refining capacities collide later
        let seen: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
        assert!(seen.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn finite_dual_tracks_limiting_dual_until_collision() {
    let p = ModelParams::new(2.0, 1.0, 3, 2).unwrap();
    for seed in 0..100 {
        let cfg = DualConfig::new(p, DualKind::Limiting, 1.0, seed);
        let start = [(0, start_marks(seed, 1)[0])];
        let lim = simulate_limiting_dual(&cfg, &start).unwrap();
        let mut capped = cfg.clone();
        capped.stop_at_collision = true;
        let fin = simulate_n_dual(&capped, 1000, &start).unwrap();
        if fin.collision.is_none() {
            assert_eq!(fin.live_set(), lim.live_set());
            for u in [0.2, 0.5, 0.9] {
                let f = ConstantField(u);
                assert_eq!(resolve_active(&fin, &f).root_active, resolve_active(&lim, &f).root_active);
            }
        }
    }
}

#[test]
fn exponential_moment_grows_at_the_exponent() {
    let p = ModelParams::new(1.0, 1.0, 2, 1).unwrap();
    for theta in [0.0, 0.3] {
        let t = 1.0;
        let est = branching_moment_mc(&p, theta, t, 40_000, 17);
        assert_eq!(est.truncated, 0);
        let want = (growth_exponent(&p, theta) * t).exp();
        assert!(est.estimate.within(want, 4.0), "θ={theta}: {} ± {} vs {want}", est.estimate.mean, est.estimate.se);
    }
}
