//! A single patch without dispersal, its dominating linear chain, and the
//! long-range extinction bounds built on their occupation times.

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::rng::replica_rng;
use crate::stats::Estimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsolatedError {
    #[error("capacity must be at least 1")]
    EmptyPatch,
    #[error("start state {start} outside 1..={capacity}")]
    BadStart { start: u32, capacity: u32 },
    #[error("rate {0} is negative or not finite")]
    BadRate(f64),
    #[error("singular tridiagonal system at row {0}")]
    Singular(usize),
}

/// Field operations needed by the tridiagonal solve.
pub trait Scalar:
    Clone + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn from_u64(n: u64) -> Self;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
}

impl Scalar for BigRational {
    /// Exact value of the binary float.
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite rate")
    }
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

/// Solve `sub[i]·x[i−1] + diag[i]·x[i] + sup[i]·x[i+1] = rhs[i]`.
/// `sub[0]` and the last `sup` are ignored.
pub fn thomas_solve<T: Scalar>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Result<Vec<T>, IsolatedError> {
    let n = diag.len();
    assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    let mut c: Vec<T> = Vec::with_capacity(n);
    let mut d: Vec<T> = Vec::with_capacity(n);
    for i in 0..n {
        let (denom, dd) = if i == 0 {
            (diag[0].clone(), rhs[0].clone())
        } else {
            (
                diag[i].clone() - sub[i].clone() * c[i - 1].clone(),
                rhs[i].clone() - sub[i].clone() * d[i - 1].clone(),
            )
        };
        if denom.is_zero() {
            return Err(IsolatedError::Singular(i));
        }
        c.push(sup[i].clone() / denom.clone());
        d.push(dd / denom);
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        let next = x[i + 1].clone();
        x[i] = x[i].clone() - c[i].clone() * next;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// Pair births `a·j(j−1)(N−j)/(N(N−1))`.
    Exact,
    /// Linear births `(a/4)·j`, truncated at `N`.
    Dominating,
}

/// Birth–death chain on `0..=N` with deaths at rate `j` and 0 absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathChain {
    pub capacity: u32,
    pub inner: f64,
    pub flavor: Flavor,
}

impl BirthDeathChain {
    pub fn new(capacity: u32, inner: f64, flavor: Flavor) -> Result<Self, IsolatedError> {
        if capacity == 0 {
            return Err(IsolatedError::EmptyPatch);
        }
        if !(inner.is_finite() && inner >= 0.0) {
            return Err(IsolatedError::BadRate(inner));
        }
        Ok(BirthDeathChain { capacity, inner, flavor })
    }

    pub fn up<T: Scalar>(&self, j: u32) -> T {
        let n = self.capacity;
        if j == 0 || j >= n {
            return T::zero();
        }
        let a = T::from_f64(self.inner);
        match self.flavor {
            Flavor::Exact => {
                let num = u64::from(j) * u64::from(j - 1) * u64::from(n - j);
                a * T::from_u64(num) / T::from_u64(u64::from(n) * u64::from(n - 1))
            }
            Flavor::Dominating => a * T::from_u64(u64::from(j)) / T::from_u64(4),
        }
    }

    pub fn down<T: Scalar>(&self, j: u32) -> T {
        T::from_u64(u64::from(j))
    }

    /// Expected number of visits to each state `0..=N` from `start`.
    /// Absorption counts as one visit to 0.
    pub fn expected_visits<T: Scalar>(&self, start: u32) -> Result<Vec<T>, IsolatedError> {
        let n = self.capacity;
        if start == 0 || start > n {
            return Err(IsolatedError::BadStart { start, capacity: n });
        }
        let p_up = |j: u32| -> T {
            let (b, d): (T, T) = (self.up(j), self.down(j));
            b.clone() / (b + d)
        };
        let p_down = |j: u32| -> T {
            let (b, d): (T, T) = (self.up(j), self.down(j));
            d.clone() / (b + d)
        };
        let len = n as usize;
        let (mut sub, mut diag, mut sup, mut rhs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for j in 1..=n {
            sub.push(if j > 1 { T::zero() - p_up(j - 1) } else { T::zero() });
            diag.push(T::one());
            sup.push(if j < n { T::zero() - p_down(j + 1) } else { T::zero() });
            rhs.push(if j == start { T::one() } else { T::zero() });
        }
        let v = thomas_solve(&sub, &diag, &sup, &rhs)?;
        debug_assert_eq!(v.len(), len);
        let v0 = v[0].clone() * p_down(1);
        Ok(std::iter::once(v0).chain(v).collect())
    }

    /// Expected time spent in each state `0..=N` before absorption. Entry 0
    /// is zero.
    pub fn occupation_times<T: Scalar>(&self, start: u32) -> Result<Vec<T>, IsolatedError> {
        let v = self.expected_visits::<T>(start)?;
        Ok(v.into_iter()
            .enumerate()
            .map(|(j, vj)| {
                if j == 0 {
                    T::zero()
                } else {
                    let exit: T = self.up::<T>(j as u32) + self.down::<T>(j as u32);
                    vj / exit
                }
            })
            .collect())
    }

    /// Generator rows as `(down, stay, up)` probabilities after
    /// uniformization at rate `lambda`.
    fn uniformized(&self, lambda: f64) -> Vec<(f64, f64, f64)> {
        (0..=self.capacity)
            .map(|j| {
                let (b, d): (f64, f64) = (self.up(j), self.down(j));
                (d / lambda, 1.0 - (b + d) / lambda, b / lambda)
            })
            .collect()
    }

    /// `P(absorbed by t)` from `start` at each of the nondecreasing `times`,
    /// by uniformization between consecutive times.
    pub fn extinction_cdf(&self, start: u32, times: &[f64]) -> Result<Vec<f64>, IsolatedError> {
        let n = self.capacity as usize;
        if start == 0 || start as usize > n {
            return Err(IsolatedError::BadStart { start, capacity: self.capacity });
        }
        let lambda = (0..=self.capacity).map(|j| self.up::<f64>(j) + self.down::<f64>(j)).fold(0.0, f64::max);
        let rows = self.uniformized(lambda);
        let mut p = vec![0.0; n + 1];
        p[start as usize] = 1.0;
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        let mut next = vec![0.0; n + 1];
        for &t in times {
            assert!(t >= now, "times must be nondecreasing");
            let mu = lambda * (t - now);
            if mu > 0.0 {
                // sum_k Pois(k; mu) p P^k, summed until the tail is negligible
                let mut term = p.clone();
                let mut acc = vec![0.0; n + 1];
                let mut log_w = -mu;
                let mut mass = 0.0;
                let mut k = 0u64;
                loop {
                    let w = log_w.exp();
                    for (a, x) in acc.iter_mut().zip(&term) {
                        *a += w * x;
                    }
                    mass += w;
                    if (1.0 - mass < 1e-14 && k as f64 > mu) || k > 10_000_000 {
                        break;
                    }
                    next.iter_mut().for_each(|x| *x = 0.0);
                    for (j, &x) in term.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        let (d, s, u) = rows[j];
                        if j == 0 {
                            next[0] += x;
                            continue;
                        }
                        next[j - 1] += x * d;
                        next[j] += x * s;
                        if j < n {
                            next[j + 1] += x * u;
                        }
                    }
                    std::mem::swap(&mut term, &mut next);
                    k += 1;
                    log_w += mu.ln() - (k as f64).ln();
                }
                p = acc;
                now = t;
            }
            out.push(p[0].min(1.0));
        }
        Ok(out)
    }
}

/// KS distance between sampled extinction times and the exact law.
pub fn extinction_ks(chain: &BirthDeathChain, start: u32, samples: &mut [f64]) -> Result<f64, IsolatedError> {
    samples.sort_by(|a, b| a.total_cmp(b));
    let cdf = chain.extinction_cdf(start, samples)?;
    let n = samples.len() as f64;
    Ok(cdf
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs()))
        .fold(0.0, f64::max))
}

/// `τ_j` for the exact single-patch chain started full, index `j`.
pub fn occupation_times_exact(capacity: u32, inner: f64) -> Result<Vec<f64>, IsolatedError> {
    BirthDeathChain::new(capacity, inner, Flavor::Exact)?.occupation_times(capacity)
}

/// Rational `τ_j` for the exact chain.
pub fn occupation_times_rational(capacity: u32, inner: f64, flavor: Flavor) -> Result<Vec<BigRational>, IsolatedError> {
    BirthDeathChain::new(capacity, inner, flavor)?.occupation_times(capacity)
}

/// `1 + ρ + … + ρ^j` for `j = 0..=n`.
pub fn geometric_visits<T: Scalar>(rho: &T, n: u32) -> Vec<T> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let (mut sum, mut pw) = (T::zero(), T::one());
    for _ in 0..=n {
        sum = sum + pw.clone();
        pw = pw * rho.clone();
        out.push(sum.clone());
    }
    out
}

/// Visits of the dominating chain from `N` in closed form: 1 at 0,
/// `(1+ρ)(1 + … + ρ^{j−1})` for `0 < j < N` and `1 + … + ρ^{N−1}` at `N`.
pub fn dominating_visits_closed<T: Scalar>(rho: &T, n: u32) -> Vec<T> {
    let g = geometric_visits(rho, n);
    (0..=n as usize)
        .map(|j| match j {
            0 => T::one(),
            j if j < n as usize => (T::one() + rho.clone()) * g[j - 1].clone(),
            j => g[j - 1].clone(),
        })
        .collect()
}

/// `Σ_{j=1..N} Σ_{i=0..j} (a/4)^i`.
pub fn weighted_occupation_bound(inner: f64, capacity: u32) -> f64 {
    weighted_occupation_bound_in::<f64>(&(inner / 4.0), capacity)
}

pub fn weighted_occupation_bound_in<T: Scalar>(rho: &T, capacity: u32) -> T {
    geometric_visits(rho, capacity).into_iter().skip(1).fold(T::zero(), |s, x| s + x)
}

/// `Σ_j j·τ_j`.
pub fn weighted_sum<T: Scalar>(tau: &[T]) -> T {
    tau.iter().enumerate().fold(T::zero(), |s, (j, t)| s + T::from_u64(j as u64) * t.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Below,
    Critical,
    Above,
}

pub fn branch(inner: f64) -> Branch {
    if (inner - 4.0).abs() < 1e-12 {
        Branch::Critical
    } else if inner < 4.0 {
        Branch::Below
    } else {
        Branch::Above
    }
}

pub fn branch_rational(inner: &BigRational) -> Branch {
    let four = BigRational::from_u64(4);
    match inner.cmp(&four) {
        std::cmp::Ordering::Less => Branch::Below,
        std::cmp::Ordering::Equal => Branch::Critical,
        std::cmp::Ordering::Greater => Branch::Above,
    }
}

/// Mean number of offspring the source patch sends out before dying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportMean {
    pub branch: Branch,
    /// The three-case closed form.
    pub closed_form: f64,
    /// `b·Σ j(j−1)τ_j/(N−1)` with exact `τ_j`.
    pub exact: f64,
}

pub fn export_count_mean(inner: f64, outer: f64, capacity: u32) -> Result<ExportMean, IsolatedError> {
    if !(outer.is_finite() && outer >= 0.0) {
        return Err(IsolatedError::BadRate(outer));
    }
    let n = f64::from(capacity);
    let rho = inner / 4.0;
    let br = branch(inner);
    let closed_form = match br {
        Branch::Below => outer * n / (1.0 - rho),
        Branch::Critical => outer / 2.0 * (n + 2.0).powi(2),
        Branch::Above => outer * (rho - 1.0).powi(-2) * rho.powi(capacity as i32 + 2),
    };
    let exact = if capacity < 2 {
        0.0
    } else {
        let tau = occupation_times_exact(capacity, inner)?;
        outer * tau.iter().enumerate().map(|(j, t)| (j * j.saturating_sub(1)) as f64 * t).sum::<f64>() / (n - 1.0)
    };
    Ok(ExportMean { branch: br, closed_form, exact })
}

/// The birthday-style bounds on a collision among at most `M^{1/3}` exports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionBound {
    /// `⌊M^{1/3}⌋`.
    pub exports: u64,
    /// `1 − Π_{j<X} (1 − j/2M)`.
    pub product: f64,
    /// `1 − (1 − X/2M)^X`.
    pub power: f64,
    /// `1 − exp(−X²/2M)`.
    pub exponential: f64,
    /// `(1/2)M^{−1/3}`.
    pub simplified: f64,
    /// `product ≤ power ≤ simplified`.
    pub chain_holds: bool,
    /// Whether `power ≤ exponential` happens to hold as well.
    pub exponential_step_holds: bool,
}

/// Largest integer `x` with `x³ ≤ m`.
pub fn integer_cube_root(m: u64) -> u64 {
    let mut x = (m as f64).cbrt().round() as u64;
    while x > 0 && x.saturating_mul(x).saturating_mul(x) > m {
        x -= 1;
    }
    while (x + 1).saturating_mul(x + 1).saturating_mul(x + 1) <= m {
        x += 1;
    }
    x
}

pub fn collision_probability_bound(range: u64) -> CollisionBound {
    let m2 = 2.0 * range as f64;
    let x = integer_cube_root(range);
    let xf = x as f64;
    let log_prod: f64 = (0..x).map(|j| (-(j as f64) / m2).ln_1p()).sum();
    let product = -log_prod.exp_m1();
    let power = -(xf * (-xf / m2).ln_1p()).exp_m1();
    let exponential = -(-xf * xf / m2).exp_m1();
    let simplified = 0.5 * (range as f64).powf(-1.0 / 3.0);
    let slack = 1e-15;
    CollisionBound {
        exports: x,
        product,
        power,
        exponential,
        simplified,
        chain_holds: product <= power + slack && power <= simplified + slack,
        exponential_step_holds: power <= exponential + slack,
    }
}

/// `min(1, M^{−1/3}(1/2 + E-bound))` with the closed-form export bound.
pub fn survival_upper_bound(p: &ModelParams) -> f64 {
    let e = export_count_mean(p.inner, p.outer, p.capacity).expect("validated params");
    (f64::from(p.range).powf(-1.0 / 3.0) * (0.5 + e.closed_form)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionMc {
    pub collision: Estimate,
    /// Export attempts before the source patch dies.
    pub exports: Estimate,
}

/// Simulate the source patch without feedback. Exports are attempted at rate
/// `b·j(j−1)/(N−1)` with a uniform target among the `2M` neighbours; an
/// exported offspring sits alone at its target until it dies at rate 1. An
/// attempt on a target holding that singleton lands with probability
/// `(N−1)/N`, and a second landing at any target is a collision.
pub fn collision_mc(p: &ModelParams, replicas: u64, seed: u64) -> CollisionMc {
    let n = p.capacity;
    let chain = BirthDeathChain { capacity: n, inner: p.inner, flavor: Flavor::Exact };
    let two_m = 2 * u64::from(p.range);
    let rows: Vec<(bool, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let mut j = n;
            let mut t = 0.0;
            let mut attempts = 0u64;
            let mut collided = false;
            // target -> death time of its singleton
            let mut hit: HashMap<u64, f64> = HashMap::new();
            while j > 0 {
                let d = f64::from(j);
                let up: f64 = chain.up(j);
                let ex = p.outer * f64::from(j) * f64::from(j.saturating_sub(1)) / f64::from((n - 1).max(1));
                let total = d + up + ex;
                t -= (1.0 - rng.random::<f64>()).ln() / total;
                let v = rng.random::<f64>() * total;
                if v < d {
                    j -= 1;
                } else if v < d + up {
                    j += 1;
                } else {
                    attempts += 1;
                    if collided {
                        continue;
                    }
                    let y = rng.random_range(0..two_m);
                    let life = -(1.0 - rng.random::<f64>()).ln();
                    match hit.get(&y) {
                        None => {
                            hit.insert(y, t + life);
                        }
                        Some(&dies) => {
                            let lands = dies <= t || rng.random::<f64>() < f64::from(n - 1) / f64::from(n);
                            if lands {
                                collided = true;
                            }
                        }
                    }
                }
            }
            (collided, attempts as f64)
        })
        .collect();
    let hits = rows.iter().filter(|r| r.0).count() as u64;
    let exports: Vec<f64> = rows.iter().map(|r| r.1).collect();
    CollisionMc { collision: Estimate::from_successes(hits, replicas), exports: Estimate::from_samples(&exports) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub j: u32,
    pub tau_exact: f64,
    pub v_dominating: f64,
    pub sigma_dominating: f64,
}

/// Per-state occupation data for the exact and dominating chains from `N`.
pub fn occupation_table(capacity: u32, inner: f64) -> Result<Vec<TableRow>, IsolatedError> {
    let tau = occupation_times_exact(capacity, inner)?;
    let dom = BirthDeathChain::new(capacity, inner, Flavor::Dominating)?;
    let v = dom.expected_visits::<f64>(capacity)?;
    let sigma = dom.occupation_times::<f64>(capacity)?;
    Ok((1..=capacity as usize)
        .map(|j| TableRow { j: j as u32, tau_exact: tau[j], v_dominating: v[j], sigma_dominating: sigma[j] })
        .collect())
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("j,tau_exact,v_dominating,sigma_dominating\n");
    for r in rows {
        out += &format!("{},{},{},{}\n", r.j, r.tau_exact, r.v_dominating, r.sigma_dominating);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn pure_death_times() {
        let tau = occupation_times_exact(7, 0.0).unwrap();
        for j in 1..=7 {
            assert!((tau[j] - 1.0 / j as f64).abs() < 1e-15);
        }
        assert_eq!(weighted_occupation_bound(0.0, 7), 7.0);
    }

    #[test]
    fn bound_examples() {
        assert!((weighted_occupation_bound(2.0, 3) - 5.125).abs() < 1e-15);
        assert_eq!(weighted_occupation_bound(4.0, 6), 27.0);
        let e = export_count_mean(2.0, 1.0, 5).unwrap();
        assert_eq!(e.closed_form, 10.0);
        assert_eq!(export_count_mean(3.0, 0.0, 5).unwrap().exact, 0.0);
        let p = ModelParams::new(2.0, 1.0, 5, 1_000_000).unwrap();
        assert!((survival_upper_bound(&p) - 0.105).abs() < 1e-12);
        let p = ModelParams::new(4.0, 1.0, 4, 1_000_000_000).unwrap();
        assert!((survival_upper_bound(&p) - 0.0185).abs() < 1e-12);
    }

    #[test]
    fn dominating_visits_in_rationals() {
        for (a, n) in [(0, 4), (2, 5), (4, 3), (6, 6)] {
            let chain = BirthDeathChain::new(n, a as f64, Flavor::Dominating).unwrap();
            let v = chain.expected_visits::<BigRational>(n).unwrap();
            assert_eq!(v, dominating_visits_closed(&q(a, 4), n));
            assert_eq!(v[0], q(1, 1));
        }
        let v = BirthDeathChain::new(5, 4.0, Flavor::Dominating).unwrap().expected_visits::<BigRational>(5).unwrap();
        let want: Vec<BigRational> = [1, 2, 4, 6, 8, 5].iter().map(|&k| q(k, 1)).collect();
        assert_eq!(v, want);
    }

    #[test]
    fn cube_root_and_collision_chain() {
        assert_eq!(integer_cube_root(1_000_000), 100);
        assert_eq!(integer_cube_root(999_999), 99);
        assert_eq!(integer_cube_root(1), 1);
        let c = collision_probability_bound(1_000_000);
        assert_eq!(c.exports, 100);
        assert!((c.simplified - 0.005).abs() < 1e-15);
        for m in [1_000u64, 1_000_000, 1_000_000_000] {
            let c = collision_probability_bound(m);
            assert!(c.chain_holds, "{m}: {c:?}");
            assert!(!c.exponential_step_holds, "{m}: {c:?}");
        }
    }

    #[test]
    fn cdf_pure_death_matches_maximum_of_exponentials() {
        let chain = BirthDeathChain::new(3, 0.0, Flavor::Exact).unwrap();
        let ts = [0.1, 0.5, 1.0, 2.0, 5.0];
        let cdf = chain.extinction_cdf(3, &ts).unwrap();
        for (t, f) in ts.iter().zip(cdf) {
            let want = (1.0 - (-t).exp()).powi(3);
            assert!((f - want).abs() < 1e-12, "{t}: {f} vs {want}");
        }
    }

    #[test]
    fn collision_mc_without_dispersal() {
        let p = ModelParams::new(2.0, 0.0, 5, 100).unwrap();
        let c = collision_mc(&p, 1000, 1);
        assert_eq!(c.collision.mean, 0.0);
        assert_eq!(c.exports.mean, 0.0);
    }
}
