//! Parameters, window states and the mesoscopic generator rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("N must be ≥ 2 (got {0})")]
    CapacityTooSmall(u32),
    #[error("M must be ≥ 1 (got {0})")]
    RangeTooSmall(u32),
    #[error("negative rate: {name} = {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("rate {name} is not finite")]
    NonFiniteRate { name: &'static str },
    #[error("occupancy {value} at site {site} exceeds capacity {capacity}")]
    OccupancyOutOfRange { site: i64, value: u32, capacity: u32 },
    #[error("site {0} lies outside the window")]
    OutsideWindow(i64),
    #[error("source {source_site} and target {target} are not neighbours within range {range}")]
    NotNeighbours { source_site: i64, target: i64, range: u32 },
    #[error("empty window")]
    EmptyWindow,
}

/// The rate constants of the model.
///
/// `inner` is the within-patch birth rate, `outer` the dispersal birth rate,
/// `capacity` the number of locations per patch and `range` the dispersal
/// range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub inner: f64,
    pub outer: f64,
    pub capacity: u32,
    pub range: u32,
}

impl ModelParams {
    pub fn new(inner: f64, outer: f64, capacity: u32, range: u32) -> Result<Self, ModelError> {
        validate_params(ModelParams { inner, outer, capacity, range })
    }

    /// Total birth rate `a + b`.
    pub fn total_birth(&self) -> f64 {
        self.inner + self.outer
    }

    /// Effective rate `a + b/2` of the symmetric two-patch system.
    pub fn two_patch_rate(&self) -> f64 {
        self.inner + self.outer / 2.0
    }

    /// `N(N-1)` as a float.
    pub(crate) fn pair_norm(&self) -> f64 {
        let n = f64::from(self.capacity);
        n * (n - 1.0)
    }
}

pub fn validate_params(p: ModelParams) -> Result<ModelParams, ModelError> {
    for (name, value) in [("a", p.inner), ("b", p.outer)] {
        if !value.is_finite() {
            return Err(ModelError::NonFiniteRate { name });
        }
        if value < 0.0 {
            return Err(ModelError::NegativeRate { name, value });
        }
    }
    if p.capacity < 2 {
        return Err(ModelError::CapacityTooSmall(p.capacity));
    }
    if p.range < 1 {
        return Err(ModelError::RangeTooSmall(p.range));
    }
    Ok(p)
}

/// What sites beyond the window look like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Vacant outside the window.
    Lower,
    /// Full outside the window.
    Upper,
}

impl BoundaryPolicy {
    /// Occupancy of a ghost site for capacity `n`.
    pub fn ghost_count(self, n: u32) -> u32 {
        match self {
            BoundaryPolicy::Lower => 0,
            BoundaryPolicy::Upper => n,
        }
    }

    /// Density of a ghost site.
    pub fn ghost_density(self) -> f64 {
        match self {
            BoundaryPolicy::Lower => 0.0,
            BoundaryPolicy::Upper => 1.0,
        }
    }
}

/// A contiguous block of sites `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self, ModelError> {
        if hi < lo {
            return Err(ModelError::EmptyWindow);
        }
        Ok(Window { lo, hi })
    }

    /// The symmetric window `[-k, k]`.
    pub fn symmetric(k: u32) -> Self {
        Window { lo: -i64::from(k), hi: i64::from(k) }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: i64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn index(&self, x: i64) -> Option<usize> {
        self.contains(x).then(|| (x - self.lo) as usize)
    }

    pub fn site(&self, i: usize) -> i64 {
        self.lo + i as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// Patch occupancies on a finite window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesoState {
    pub window: Window,
    pub xi: Vec<u32>,
    pub boundary: BoundaryPolicy,
    pub time: f64,
}

impl MesoState {
    pub fn new(
        window: Window,
        xi: Vec<u32>,
        boundary: BoundaryPolicy,
        capacity: u32,
    ) -> Result<Self, ModelError> {
        assert_eq!(xi.len(), window.len(), "occupancy vector does not match window");
        if let Some((i, &v)) = xi.iter().enumerate().find(|(_, &v)| v > capacity) {
            return Err(ModelError::OccupancyOutOfRange { site: window.site(i), value: v, capacity });
        }
        Ok(MesoState { window, xi, boundary, time: 0.0 })
    }

    pub fn empty(window: Window, boundary: BoundaryPolicy) -> Self {
        MesoState { xi: vec![0; window.len()], window, boundary, time: 0.0 }
    }

    /// Occupancy at `x`, reading ghosts beyond the window.
    pub fn get(&self, x: i64, capacity: u32) -> u32 {
        match self.window.index(x) {
            Some(i) => self.xi[i],
            None => self.boundary.ghost_count(capacity),
        }
    }

    pub fn is_extinct(&self) -> bool {
        self.xi.iter().all(|&v| v == 0)
    }

    /// Apply an event in place. Births into full patches and deaths in empty
    /// ones are rejected, since they have rate zero.
    pub fn apply(&mut self, ev: EventKind, capacity: u32) -> Result<(), ModelError> {
        match ev {
            EventKind::Death(x) => {
                let i = self.window.index(x).ok_or(ModelError::OutsideWindow(x))?;
                if self.xi[i] == 0 {
                    return Err(ModelError::OccupancyOutOfRange { site: x, value: 0, capacity });
                }
                self.xi[i] -= 1;
            }
            EventKind::InnerBirth(x) | EventKind::OuterBirth { target: x, .. } => {
                let i = self.window.index(x).ok_or(ModelError::OutsideWindow(x))?;
                if self.xi[i] >= capacity {
                    return Err(ModelError::OccupancyOutOfRange {
                        site: x,
                        value: self.xi[i] + 1,
                        capacity,
                    });
                }
                self.xi[i] += 1;
            }
        }
        Ok(())
    }
}

/// A single transition of the patch chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Death(i64),
    InnerBirth(i64),
    /// `source` may be a ghost site beyond the window.
    OuterBirth { source: i64, target: i64 },
}

/// Pair factor `k(k-1)` as a float.
#[inline]
pub(crate) fn pairs(k: u32) -> f64 {
    let k = f64::from(k);
    k * (k - 1.0)
}

pub fn death_rate(s: &MesoState, x: i64) -> Result<f64, ModelError> {
    let i = s.window.index(x).ok_or(ModelError::OutsideWindow(x))?;
    Ok(f64::from(s.xi[i]))
}

pub fn inner_birth_rate(p: &ModelParams, s: &MesoState, x: i64) -> Result<f64, ModelError> {
    let i = s.window.index(x).ok_or(ModelError::OutsideWindow(x))?;
    let k = s.xi[i];
    Ok(p.inner * pairs(k) * f64::from(p.capacity - k) / p.pair_norm())
}

pub fn outer_birth_rate(
    p: &ModelParams,
    s: &MesoState,
    source: i64,
    target: i64,
) -> Result<f64, ModelError> {
    let d = (target - source).unsigned_abs();
    if d == 0 || d > u64::from(p.range) {
        return Err(ModelError::NotNeighbours { source_site: source, target, range: p.range });
    }
    let ti = s.window.index(target).ok_or(ModelError::OutsideWindow(target))?;
    let ky = s.get(source, p.capacity);
    let kx = s.xi[ti];
    let per_target = p.outer / (2.0 * f64::from(p.range));
    Ok(per_target * pairs(ky) * f64::from(p.capacity - kx) / p.pair_norm())
}

/// Every positive-rate event together with its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub rows: Vec<(EventKind, f64)>,
    pub total: f64,
}

/// Enumerate all events of the restricted chain. Ghost sources contribute
/// under the upper policy only because the lower policy reads them as empty.
/// Births landing beyond the window are not part of the restricted chain.
pub fn total_rate(p: &ModelParams, s: &MesoState) -> RateTable {
    let m = i64::from(p.range);
    let mut rows = Vec::new();
    for x in s.window.sites() {
        let death = f64::from(s.get(x, p.capacity));
        if death > 0.0 {
            rows.push((EventKind::Death(x), death));
        }
        let inner = inner_birth_rate(p, s, x).expect("site in window");
        if inner > 0.0 {
            rows.push((EventKind::InnerBirth(x), inner));
        }
        for y in (x - m)..=(x + m) {
            if y == x {
                continue;
            }
            let rate = outer_birth_rate(p, s, y, x).expect("neighbour pair");
            if rate > 0.0 {
                rows.push((EventKind::OuterBirth { source: y, target: x }, rate));
            }
        }
    }
    let total = rows.iter().map(|r| r.1).sum();
    RateTable { rows, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(lo: i64, xi: Vec<u32>, boundary: BoundaryPolicy, n: u32) -> MesoState {
        let w = Window::new(lo, lo + xi.len() as i64 - 1).unwrap();
        MesoState::new(w, xi, boundary, n).unwrap()
    }

    #[test]
    fn validation_messages() {
        let ok = ModelParams::new(2.0, 1.0, 10, 1).unwrap();
        assert_eq!(ok.total_birth(), 3.0);
        let e = ModelParams::new(2.0, 1.0, 1, 1).unwrap_err();
        assert!(e.to_string().contains("N must be ≥ 2"));
        let e = ModelParams::new(-1.0, 0.0, 5, 2).unwrap_err();
        assert!(e.to_string().contains("negative rate"));
        assert!(ModelParams::new(1.0, 1.0, 5, 0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 5, 1).is_err());
    }

    #[test]
    fn death_is_occupancy() {
        let s = state(0, vec![0, 10, 7], BoundaryPolicy::Lower, 10);
        assert_eq!(death_rate(&s, 0).unwrap(), 0.0);
        assert_eq!(death_rate(&s, 1).unwrap(), 10.0);
        assert_eq!(death_rate(&s, 2).unwrap(), 7.0);
    }

    #[test]
    fn inner_birth_values() {
        let p = ModelParams::new(2.0, 0.0, 10, 1).unwrap();
        let s = state(0, vec![0, 1, 10, 5], BoundaryPolicy::Lower, 10);
        assert_eq!(inner_birth_rate(&p, &s, 0).unwrap(), 0.0);
        assert_eq!(inner_birth_rate(&p, &s, 1).unwrap(), 0.0);
        assert_eq!(inner_birth_rate(&p, &s, 2).unwrap(), 0.0);
        assert_relative_eq!(inner_birth_rate(&p, &s, 3).unwrap(), 20.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn outer_birth_from_full_ghost() {
        let p = ModelParams::new(0.0, 1.0, 4, 1).unwrap();
        let s = state(0, vec![0], BoundaryPolicy::Upper, 4);
        assert_relative_eq!(outer_birth_rate(&p, &s, -1, 0).unwrap(), 2.0, epsilon = 1e-14);
        let lower = state(0, vec![0], BoundaryPolicy::Lower, 4);
        assert_eq!(outer_birth_rate(&p, &lower, -1, 0).unwrap(), 0.0);
        assert!(outer_birth_rate(&p, &s, 0, 0).is_err());
        assert!(outer_birth_rate(&p, &s, -2, 0).is_err());
    }

    #[test]
    fn two_site_table() {
        let p = ModelParams::new(1.0, 1.0, 2, 1).unwrap();
        let s = state(0, vec![2, 0], BoundaryPolicy::Lower, 2);
        let t = total_rate(&p, &s);
        assert_relative_eq!(t.total, 3.0, epsilon = 1e-14);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].0, EventKind::OuterBirth { source: 0, target: 1 });
        let empty = state(-2, vec![0; 5], BoundaryPolicy::Lower, 2);
        assert_eq!(total_rate(&p, &empty).total, 0.0);
        let q = ModelParams::new(3.0, 0.0, 6, 1).unwrap();
        let full = state(0, vec![6], BoundaryPolicy::Lower, 6);
        assert_eq!(total_rate(&q, &full).total, 6.0);
    }

    #[test]
    fn apply_respects_capacity() {
        let mut s = state(0, vec![2, 0], BoundaryPolicy::Lower, 2);
        assert!(s.apply(EventKind::InnerBirth(0), 2).is_err());
        s.apply(EventKind::OuterBirth { source: 0, target: 1 }, 2).unwrap();
        assert_eq!(s.xi, vec![2, 1]);
        s.apply(EventKind::Death(1), 2).unwrap();
        assert!(s.apply(EventKind::Death(1), 2).is_err());
    }
}
