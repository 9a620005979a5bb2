//! Exact pathwise duality on tiny microscopic instances.
//!
//! Locations are `(patch, slot)` pairs numbered `patch·N + slot`, at most
//! nine of them, so a configuration fits in a bitmask and a family of
//! location sets fits in a 512-bit set indexed by bitmask. The dual is kept
//! literally as such a family.

use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::replica_rng;

pub const MAX_LOCATIONS: u32 = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MicroError {
    #[error("{capacity} slots × {patches} patches exceeds {MAX_LOCATIONS} locations")]
    TooLarge { capacity: u32, patches: u32 },
    #[error("capacity and patch count must be positive")]
    Empty,
    #[error("rates must be finite and nonnegative")]
    BadRate,
    #[error("malformed event log: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MicroKind {
    Death,
    Birth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroEvent {
    pub t: f64,
    pub kind: MicroKind,
    pub target: u8,
    /// Ordered pair of parent locations for births.
    pub parents: Option<[u8; 2]>,
}

/// A graphical representation on patches `0..patches` with range 1 and no
/// sites beyond, plus the initial configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroInstance {
    pub capacity: u32,
    pub patches: u32,
    pub inner: f64,
    pub outer: f64,
    pub t: f64,
    pub initial: u16,
    pub events: Vec<MicroEvent>,
}

type Family = [u64; 8];

fn tables() -> &'static (Vec<Family>, Vec<Family>) {
    static T: OnceLock<(Vec<Family>, Vec<Family>)> = OnceLock::new();
    T.get_or_init(|| {
        // subsets[eta]: all masks contained in eta; containing[l]: all masks with bit l
        let mut subsets = vec![[0u64; 8]; 512];
        let mut containing = vec![[0u64; 8]; MAX_LOCATIONS as usize];
        for s in 0..512usize {
            for (l, c) in containing.iter_mut().enumerate() {
                if s & (1 << l) != 0 {
                    c[s / 64] |= 1 << (s % 64);
                }
            }
        }
        for (eta, fam) in subsets.iter_mut().enumerate() {
            let mut s = eta;
            loop {
                fam[s / 64] |= 1 << (s % 64);
                if s == 0 {
                    break;
                }
                s = (s - 1) & eta;
            }
        }
        (subsets, containing)
    })
}

fn intersects(a: &Family, b: &Family) -> bool {
    a.iter().zip(b).any(|(x, y)| x & y != 0)
}

impl MicroInstance {
    pub fn locations(&self) -> u32 {
        self.capacity * self.patches
    }

    /// Draw a graphical representation up to time `t` and a uniform initial
    /// configuration. Each location carries deaths at rate 1, inner pair
    /// births at total rate `a` and, per neighbouring patch, outer pair
    /// births at total rate `b/2`; a single slot per patch has no pairs.
    pub fn generate(capacity: u32, patches: u32, inner: f64, outer: f64, t: f64, seed: u64) -> Result<Self, MicroError> {
        if capacity == 0 || patches == 0 {
            return Err(MicroError::Empty);
        }
        if capacity * patches > MAX_LOCATIONS {
            return Err(MicroError::TooLarge { capacity, patches });
        }
        if !(inner >= 0.0 && outer >= 0.0 && inner.is_finite() && outer.is_finite()) {
            return Err(MicroError::BadRate);
        }
        let mut rng = replica_rng(seed, 0);
        let n = capacity;
        let total_locs = n * patches;
        let initial = (rng.random::<u32>() & ((1u32 << total_locs) - 1)) as u16;
        let mut events = Vec::new();
        let pair_in = |rng: &mut rand_chacha::ChaCha8Rng, patch: u32| -> [u8; 2] {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            [(patch * n + i) as u8, (patch * n + j) as u8]
        };
        for loc in 0..total_locs {
            let x = loc / n;
            let nbrs: Vec<u32> = [x.checked_sub(1), (x + 1 < patches).then_some(x + 1)].into_iter().flatten().collect();
            let (a, b) = if n >= 2 { (inner, outer / 2.0 * nbrs.len() as f64) } else { (0.0, 0.0) };
            let rate = 1.0 + a + b;
            let mut s = 0.0;
            loop {
                s -= (1.0 - rng.random::<f64>()).ln() / rate;
                if s > t {
                    break;
                }
                let v = rng.random::<f64>() * rate;
                let ev = if v < 1.0 {
                    MicroEvent { t: s, kind: MicroKind::Death, target: loc as u8, parents: None }
                } else {
                    let patch = if v < 1.0 + a { x } else { nbrs[rng.random_range(0..nbrs.len())] };
                    MicroEvent { t: s, kind: MicroKind::Birth, target: loc as u8, parents: Some(pair_in(&mut rng, patch)) }
                };
                events.push(ev);
            }
        }
        events.sort_by(|p, q| p.t.total_cmp(&q.t));
        Ok(MicroInstance { capacity, patches, inner, outer, t, initial, events })
    }

    /// Configurations before the first event and after each event.
    pub fn forward(&self) -> Vec<u16> {
        let mut eta = self.initial;
        let mut out = vec![eta];
        for e in &self.events {
            match (e.kind, e.parents) {
                (MicroKind::Death, _) => eta &= !(1 << e.target),
                (MicroKind::Birth, Some([y, z])) => {
                    if eta & (1 << y) != 0 && eta & (1 << z) != 0 {
                        eta |= 1 << e.target;
                    }
                }
                (MicroKind::Birth, None) => {}
            }
            out.push(eta);
        }
        out
    }

    /// Check, for every location `w` and every event time, that `w` is
    /// occupied at `t` iff some set of the dual started from `{{w}}` is
    /// occupied just before that event, and at time 0. Returns the failing
    /// `(location, events undone)` pairs.
    pub fn check(&self) -> Vec<(u8, usize)> {
        let (subsets, containing) = tables();
        let states = self.forward();
        let end = *states.last().unwrap();
        let mut failures = Vec::new();
        for w in 0..self.locations() as u8 {
            let truth = end & (1 << w) != 0;
            let mut fam: Family = [0; 8];
            let start = 1usize << w;
            fam[start / 64] |= 1 << (start % 64);
            if intersects(&fam, &subsets[end as usize]) != truth {
                failures.push((w, 0));
            }
            for (k, e) in self.events.iter().enumerate().rev() {
                let hit = &containing[e.target as usize];
                match (e.kind, e.parents) {
                    (MicroKind::Death, _) => {
                        for (f, h) in fam.iter_mut().zip(hit) {
                            *f &= !h;
                        }
                    }
                    (MicroKind::Birth, Some([y, z])) => {
                        let add = (1usize << y) | (1usize << z);
                        let mut new = fam;
                        for (word, (f, h)) in fam.iter().zip(hit).enumerate() {
                            let mut bits = f & h;
                            while bits != 0 {
                                let s = word * 64 + bits.trailing_zeros() as usize;
                                bits &= bits - 1;
                                let s2 = (s & !(1usize << e.target)) | add;
                                new[s2 / 64] |= 1 << (s2 % 64);
                            }
                        }
                        fam = new;
                    }
                    (MicroKind::Birth, None) => {}
                }
                if intersects(&fam, &subsets[states[k] as usize]) != truth {
                    failures.push((w, self.events.len() - k));
                }
            }
        }
        failures
    }

    /// Header line followed by one event per line.
    pub fn to_json_lines(&self) -> String {
        let header = serde_json::json!({
            "capacity": self.capacity, "patches": self.patches, "inner": self.inner,
            "outer": self.outer, "t": self.t, "initial": self.initial,
        });
        let mut out = header.to_string() + "\n";
        for e in &self.events {
            out += &serde_json::to_string(e).expect("plain data");
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self, MicroError> {
        #[derive(Deserialize)]
        struct Header {
            capacity: u32,
            patches: u32,
            inner: f64,
            outer: f64,
            t: f64,
            initial: u16,
        }
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| MicroError::Parse("empty input".into()))?;
        let h: Header = serde_json::from_str(head).map_err(|e| MicroError::Parse(e.to_string()))?;
        if h.capacity * h.patches > MAX_LOCATIONS {
            return Err(MicroError::TooLarge { capacity: h.capacity, patches: h.patches });
        }
        let events = lines
            .map(|l| serde_json::from_str(l).map_err(|e| MicroError::Parse(e.to_string())))
            .collect::<Result<Vec<MicroEvent>, _>>()?;
        Ok(MicroInstance {
            capacity: h.capacity,
            patches: h.patches,
            inner: h.inner,
            outer: h.outer,
            t: h.t,
            initial: h.initial,
            events,
        })
    }
}

/// Generate one instance from `seed` and check duality on it.
pub fn duality_check_exact(
    inner: f64,
    outer: f64,
    capacity: u32,
    patches: u32,
    t: f64,
    seed: u64,
) -> Result<bool, MicroError> {
    Ok(MicroInstance::generate(capacity, patches, inner, outer, t, seed)?.check().is_empty())
}

/// `(capacity, patches, a, b, seed)` of a failing instance.
pub type Failure = (u32, u32, f64, f64, u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub instances: u64,
    pub failures: Vec<Failure>,
}

/// Check seeds `0..seeds` for every combination of the given sizes and rates.
pub fn duality_sweep(
    capacities: &[u32],
    patch_counts: &[u32],
    rates: &[f64],
    t: f64,
    seeds: u64,
) -> Result<SweepReport, MicroError> {
    let mut combos = Vec::new();
    for &n in capacities {
        for &p in patch_counts {
            for &a in rates {
                for &b in rates {
                    combos.push((n, p, a, b));
                }
            }
        }
    }
    let failures: Vec<Result<Vec<Failure>, MicroError>> = combos
        .par_iter()
        .map(|&(n, p, a, b)| {
            let mut bad = Vec::new();
            for seed in 0..seeds {
                if !duality_check_exact(a, b, n, p, t, seed)? {
                    bad.push((n, p, a, b, seed));
                }
            }
            Ok(bad)
        })
        .collect();
    let mut all = Vec::new();
    for f in failures {
        all.extend(f?);
    }
    Ok(SweepReport { instances: combos.len() as u64 * seeds, failures: all })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn death_only_and_empty_start() {
        for seed in 0..200 {
            assert!(duality_check_exact(0.0, 0.0, 3, 3, 2.0, seed).unwrap());
        }
        let mut inst = MicroInstance::generate(2, 2, 3.0, 3.0, 2.0, 5).unwrap();
        inst.initial = 0;
        assert!(inst.forward().iter().all(|&e| e == 0));
        assert!(inst.check().is_empty());
    }

    #[test]
    fn hand_built_birth_needs_both_parents() {
        let birth = |t, target, y, z| MicroEvent { t, kind: MicroKind::Birth, target, parents: Some([y, z]) };
        let death = |t, target| MicroEvent { t, kind: MicroKind::Death, target, parents: None };
        let mut inst = MicroInstance {
            capacity: 3,
            patches: 1,
            inner: 1.0,
            outer: 0.0,
            t: 1.0,
            initial: 0b011,
            events: vec![birth(0.2, 2, 0, 1), death(0.4, 0), birth(0.6, 0, 1, 2), death(0.8, 1), birth(0.9, 1, 0, 2)],
        };
        assert_eq!(inst.forward(), vec![0b011, 0b111, 0b110, 0b111, 0b101, 0b111]);
        assert!(inst.check().is_empty());
        inst.initial = 0b001;
        assert_eq!(*inst.forward().last().unwrap(), 0);
        assert!(inst.check().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let inst = MicroInstance::generate(2, 3, 1.0, 3.0, 2.0, 3).unwrap();
        let back = MicroInstance::from_json_lines(&inst.to_json_lines()).unwrap();
        assert_eq!(inst, back);
        assert!(MicroInstance::generate(3, 4, 1.0, 1.0, 1.0, 0).is_err());
    }
}
