use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

use patchdyn_core::model::{death_rate, inner_birth_rate, outer_birth_rate, total_rate, Window};
use patchdyn_core::{BoundaryPolicy, EventKind, MesoState, ModelParams};

fn r(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

// a and b are dyadic so the float rates are exact when the oracle is
fn inner_oracle(a: u64, n: u64, k: u64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(4)) * r(k) * r(k.saturating_sub(1)) * r(n - k) / (r(n) * r(n - 1))
}

fn outer_oracle(b: u64, m: u64, n: u64, ky: u64, kx: u64) -> BigRational {
    BigRational::new(BigInt::from(b), BigInt::from(8 * m)) * r(ky) * r(ky.saturating_sub(1)) * r(n - kx)
        / (r(n) * r(n - 1))
}

fn state(n: u32, xi: Vec<u32>, boundary: BoundaryPolicy) -> MesoState {
    let k = (xi.len() / 2) as u32;
    MesoState::new(Window::symmetric(k), xi, boundary, n).unwrap()
}

#[test]
fn rates_match_rational_oracle() {
    for n in 2..=7u32 {
        for a4 in [0u64, 3, 9, 17] {
            for b4 in [0u64, 5, 12] {
                for m in 1..=2u32 {
                    let p = ModelParams::new(a4 as f64 / 4.0, b4 as f64 / 4.0, n, m).unwrap();
                    let xi: Vec<u32> = (0..5).map(|i| (i * 3 + n) % (n + 1)).collect();
                    let s = state(n, xi.clone(), BoundaryPolicy::Lower);
                    for (i, x) in s.window.sites().enumerate() {
                        assert_eq!(death_rate(&s, x).unwrap(), f64::from(xi[i]));
                        let want = inner_oracle(a4, n.into(), xi[i].into()).to_f64().unwrap();
                        assert_eq!(inner_birth_rate(&p, &s, x).unwrap(), want);
                        for y in (x - i64::from(m))..=(x + i64::from(m)) {
                            if y == x {
                                continue;
                            }
                            let ky = s.get(y, n);
                            let want = outer_oracle(b4, m.into(), n.into(), ky.into(), xi[i].into()).to_f64().unwrap();
                            let got = outer_birth_rate(&p, &s, y, x).unwrap();
                            assert!((got - want).abs() <= 1e-15 * want.max(1.0), "{got} vs {want}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn ghosts_follow_policy() {
    let p = ModelParams::new(1.0, 2.0, 4, 1).unwrap();
    let lower = state(4, vec![0, 0, 0], BoundaryPolicy::Lower);
    let upper = state(4, vec![0, 0, 0], BoundaryPolicy::Upper);
    assert_eq!(total_rate(&p, &lower).total, 0.0);
    // two full ghosts, each feeding an empty edge site at (b/2)·N = 4
    let t = total_rate(&p, &upper);
    assert!((t.total - 8.0).abs() < 1e-15);
    assert!(t.rows.iter().all(|(e, _)| matches!(e, EventKind::OuterBirth { .. })));
}

#[test]
fn non_neighbours_rejected() {
    let p = ModelParams::new(1.0, 1.0, 3, 2).unwrap();
    let s = state(3, vec![3; 7], BoundaryPolicy::Lower);
    assert!(outer_birth_rate(&p, &s, 0, 0).is_err());
    assert!(outer_birth_rate(&p, &s, 3, 0).is_err());
    assert!(outer_birth_rate(&p, &s, 2, 0).is_ok());
}

proptest! {
    #[test]
    fn table_total_is_row_sum(
        n in 2u32..8,
        m in 1u32..3,
        a in 0.0f64..6.0,
        b in 0.0f64..6.0,
        seed in prop::collection::vec(0u32..100, 7),
        upper in any::<bool>(),
    ) {
        let p = ModelParams::new(a, b, n, m).unwrap();
        let boundary = if upper { BoundaryPolicy::Upper } else { BoundaryPolicy::Lower };
        let s = state(n, seed.iter().map(|v| v % (n + 1)).collect(), boundary);
        let t = total_rate(&p, &s);
        let sum: f64 = t.rows.iter().map(|r| r.1).sum();
        prop_assert!((sum - t.total).abs() <= 1e-12 * t.total.max(1.0));
        prop_assert!(t.rows.iter().all(|r| r.1 > 0.0));
        // every listed event is applicable
        for (e, _) in &t.rows {
            let mut c = s.clone();
            prop_assert!(c.apply(*e, n).is_ok());
        }
    }
}
