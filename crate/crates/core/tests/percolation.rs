use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use patchdyn_core::percolation::{
    default_width, enumerate_survival, enumerated_probability, evolve_wet, good_event_density,
    spread_block_sampler, spread_block_times, survival_probability_exact, OrientedGrid, UniformField,
};
use patchdyn_core::ModelParams;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wet_sets_shrink_as_gamma_grows(seed in any::<u64>(), g1 in 0.0f64..1.0, g2 in 0.0f64..1.0, k in 0u32..3) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let field = UniformField::sample(12, default_width(12), k, &mut ChaCha8Rng::seed_from_u64(seed));
        // sites are open with probability 1 − γ
        let a = evolve_wet(&field.grid(hi), &[0, 2]).unwrap();
        let b = evolve_wet(&field.grid(lo), &[0, 2]).unwrap();
        for (x, y) in a.levels.iter().zip(&b.levels) {
            prop_assert!(x.iter().all(|z| y.contains(z)));
        }
    }

    #[test]
    fn closed_marginal_is_gamma(gamma in 0.05f64..0.95, k in 0u32..4) {
        let field = UniformField::sample(4, 4, k, &mut ChaCha8Rng::seed_from_u64(1));
        let q = field.threshold(gamma);
        let w = f64::from(field.window_size());
        prop_assert!(((1.0 - q).powf(w) - (1.0 - gamma)).abs() < 1e-12);
    }
}

#[test]
fn all_open_wets_the_cone() {
    let grid = OrientedGrid::all(6, 14, true);
    let wet = evolve_wet(&grid, &[0]).unwrap();
    for (n, level) in wet.levels.iter().enumerate() {
        assert_eq!(level.len(), n + 1);
    }
}

#[test]
fn exact_survival_decreases_in_gamma() {
    let mut last = BigRational::from_integer(BigInt::from(1));
    for k in 1..10 {
        let g = BigRational::new(BigInt::from(k), BigInt::from(10));
        let p = survival_probability_exact(4, 9, &[0], &g).unwrap();
        assert!(p < last);
        assert_eq!(p, enumerated_probability(&enumerate_survival(4, 9, &[0]).unwrap(), &g));
        last = p;
    }
}

#[test]
fn spread_block_density_rises_with_capacity() {
    let times = spread_block_times(&ModelParams::new(6.0, 3.0, 50, 1).unwrap(), 0.1, 50.0).unwrap();
    assert!(times.t1 < times.t2);
    let dens: Vec<f64> = [50u32, 200]
        .iter()
        .map(|&n| {
            let p = ModelParams::new(6.0, 3.0, n, 1).unwrap();
            let times = spread_block_times(&p, 0.1, 50.0).unwrap();
            good_event_density(spread_block_sampler(p, times), 200, 5).density.mean
        })
        .collect();
    assert!(dens[1] > dens[0], "{dens:?}");
}
