use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use patchdyn_core::isolated::{
    collision_mc, export_count_mean, geometric_visits, occupation_table, table_csv, BirthDeathChain, Branch, Flavor,
};
use patchdyn_core::sim::{origin_occupation_mc, SimConfig};
use patchdyn_core::ModelParams;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn dominating_visits(a: i64, n: u32) -> Vec<BigRational> {
    BirthDeathChain::new(n, a as f64, Flavor::Dominating).unwrap().expected_visits(n).unwrap()
}

#[test]
fn visits_solve_first_step_equations() {
    for a in [0i64, 1, 4, 7] {
        for n in [2u32, 3, 6] {
            let chain = BirthDeathChain::new(n, a as f64, Flavor::Dominating).unwrap();
            let v = dominating_visits(a, n);
            let jump = |j: u32| -> (BigRational, BigRational) {
                let up: BigRational = chain.up(j);
                let down: BigRational = chain.down(j);
                let tot = up.clone() + down.clone();
                (up / tot.clone(), down / tot)
            };
            for j in 0..=n {
                let mut rhs = if j == n { BigRational::one() } else { BigRational::zero() };
                if j < n {
                    rhs += jump(j + 1).1 * v[j as usize + 1].clone();
                }
                if j >= 2 {
                    rhs += jump(j - 1).0 * v[j as usize - 1].clone();
                }
                assert_eq!(v[j as usize], rhs, "a={a} N={n} j={j}");
            }
        }
    }
}

#[test]
fn stated_recursion_fails_with_births() {
    // v_j = (1+ρ)v_{j−1} − ρ v_{j−2} for 2 ≤ j ≤ N
    let holds = |a: i64, n: u32| {
        let v = dominating_visits(a, n);
        let rho = q(a, 4);
        (2..=n as usize).all(|j| v[j] == (BigRational::one() + rho.clone()) * v[j - 1].clone() - rho.clone() * v[j - 2].clone())
    };
    assert!(holds(0, 5));
    for a in [1, 2, 4, 6] {
        assert!(!holds(a, 5), "a={a}");
    }
    assert_eq!(dominating_visits(4, 5), [1, 2, 4, 6, 8, 5].map(|k| q(k, 1)).to_vec());
    assert_ne!(dominating_visits(4, 5), geometric_visits(&q(1, 1), 5));
}

#[test]
fn table_matches_simulation() {
    let rows = occupation_table(5, 3.0).unwrap();
    assert_eq!(rows.len(), 5);
    let occ = origin_occupation_mc(&SimConfig::new(ModelParams::new(3.0, 0.0, 5, 1).unwrap(), 0, 1e12, 9), 100_000).unwrap();
    for r in &rows {
        let e = occ.per_level[r.j as usize];
        assert!(e.within(r.tau_exact, 4.0), "j={}: {} vs {}", r.j, e.mean, r.tau_exact);
        assert!(r.tau_exact <= r.sigma_dominating + 1e-12);
    }
    let csv = table_csv(&rows);
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn export_mean_below_closed_form() {
    for a in [1.0, 2.0, 4.0, 6.0] {
        for n in [3u32, 5, 10] {
            let m = export_count_mean(a, 1.0, n).unwrap();
            assert!(m.exact <= m.closed_form + 1e-12, "a={a} N={n}: {} > {}", m.exact, m.closed_form);
            let want = if a < 4.0 { Branch::Below } else if a == 4.0 { Branch::Critical } else { Branch::Above };
            assert_eq!(m.branch, want);
        }
    }
}

#[test]
fn collisions_thin_out_with_range() {
    let probs: Vec<f64> = [1u32, 10, 100, 1000]
        .iter()
        .map(|&m| collision_mc(&ModelParams::new(2.0, 1.0, 5, m).unwrap(), 20_000, 3).collision.mean)
        .collect();
    assert!(probs.windows(2).all(|w| w[1] < w[0]), "{probs:?}");
}
