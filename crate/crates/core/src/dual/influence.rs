//! The labelled influence set.
//!
//! One engine drives both duals. Every point or location carries an event
//! stream addressed by its label, and the random numbers of an event depend
//! only on `(label, event counter)`. Before the first collision the
//! finite-capacity dual allocates location labels equal to personal labels,
//! so both duals consume the same numbers and their paths coincide.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::Profile;
use crate::model::{BoundaryPolicy, ModelParams, Window};
use crate::rng::{exponential, unit_closed_open, unit_open, BlockSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("start set is empty")]
    EmptyStart,
    #[error("time must be nonnegative and finite (got {0})")]
    BadTime(f64),
}

/// Which dual to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    Limiting,
    /// Marks are bucketed into `N` locations per patch.
    Capacity(u32),
}

/// Sites beyond `window` are frozen: points landing there have no events
/// and count as good iff their mark is at most the ghost density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restriction {
    pub window: Window,
    pub boundary: BoundaryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub params: ModelParams,
    pub kind: DualKind,
    pub t_end: f64,
    pub seed: u64,
    /// Live-point limit; exceeding it truncates the path.
    pub cap: usize,
    pub restriction: Option<Restriction>,
    /// Stop at the first collision.
    pub stop_at_collision: bool,
    pub record_log: bool,
}

impl DualConfig {
    pub fn new(params: ModelParams, kind: DualKind, t_end: f64, seed: u64) -> Self {
        DualConfig {
            params,
            kind,
            t_end,
            seed,
            cap: 1_000_000,
            restriction: None,
            stop_at_collision: false,
            record_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub site: i64,
    pub mark: f64,
    pub label: u64,
    /// Index of the branching that created the point; 0 for start points.
    pub generation: u64,
    /// Label of the point whose event created this one.
    pub parent: Option<u64>,
    pub location: u64,
    pub born: f64,
    pub died: Option<f64>,
    pub frozen: bool,
}

/// One branching: both children share the generation number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branching {
    pub generation: u64,
    pub t: f64,
    /// Every live label at the branching location.
    pub parents: Vec<u64>,
    pub children: [u64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Branch,
    Death,
    Collision,
}

/// Audit record, written as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEvent {
    pub t: f64,
    pub kind: LogKind,
    pub labels: Vec<u64>,
    pub sites: Vec<i64>,
    pub marks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSet {
    pub kind: DualKind,
    pub t_end: f64,
    /// All points ever created, indexed by label.
    pub points: Vec<DualPoint>,
    pub branchings: Vec<Branching>,
    /// First collision time, `None` if there was none up to the stop time.
    pub collision: Option<f64>,
    pub truncated: bool,
    /// When the simulation stopped; `t_end` unless stopped at a collision
    /// or truncated.
    pub stopped_at: f64,
    pub log: Vec<DualEvent>,
    pub start_labels: Vec<u64>,
}

impl InfluenceSet {
    /// Points alive when the simulation stopped, by label.
    pub fn live(&self) -> impl Iterator<Item = &DualPoint> {
        self.points.iter().filter(|p| p.died.is_none())
    }

    pub fn live_count(&self) -> usize {
        self.live().count()
    }

    /// Live `(site, mark)` pairs sorted by label.
    pub fn live_set(&self) -> Vec<(u64, i64, f64)> {
        self.live().map(|p| (p.label, p.site, p.mark)).collect()
    }

    pub fn to_json_lines(&self) -> String {
        self.log.iter().map(|e| serde_json::to_string(e).expect("plain data") + "\n").collect()
    }
}

struct Due(f64);

impl PartialEq for Due {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Due {}

impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Due {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Event stream state of one location (or one point in the limiting dual).
struct Stream {
    site: i64,
    counter: u64,
    members: Vec<u64>,
    /// Mark bucket, for the finite dual.
    bucket: u32,
}

/// What one stream event does.
pub(crate) enum Action {
    Death,
    /// Pair placed at `site` with the two marks and a spare word.
    Birth { site: i64, marks: [f64; 2], spare: [u64; 2] },
}

/// Decode an event of a stream sitting at `site`.
pub(crate) fn decode(p: &ModelParams, site: i64, w: &[u64; 8]) -> Action {
    let total = 1.0 + p.inner + p.outer;
    let v = unit_closed_open(w[1]) * total;
    if v < 1.0 {
        return Action::Death;
    }
    let target = if v < 1.0 + p.inner || p.outer == 0.0 {
        site
    } else {
        let m = i64::from(p.range);
        let j = (((v - 1.0 - p.inner) / p.outer * (2 * m) as f64) as i64).min(2 * m - 1);
        if j < m {
            site - m + j
        } else {
            site + j - m + 1
        }
    };
    Action::Birth { site: target, marks: [unit_open(w[2]), unit_open(w[3])], spare: [w[4], w[5]] }
}

/// Total event rate of one stream.
pub(crate) fn stream_rate(p: &ModelParams) -> f64 {
    1.0 + p.inner + p.outer
}

pub fn bucket(mark: f64, n: u32) -> u32 {
    ((mark * f64::from(n)) as u32).min(n - 1)
}

struct Engine<'a> {
    cfg: &'a DualConfig,
    source: BlockSource,
    heap: BinaryHeap<Reverse<(Due, u64)>>,
    streams: HashMap<u64, Stream>,
    /// Live locations by `(site, bucket)`, finite dual only.
    occupied: HashMap<(i64, u32), u64>,
    out: InfluenceSet,
    live: usize,
}

impl<'a> Engine<'a> {
    fn frozen(&self, site: i64) -> bool {
        self.cfg.restriction.is_some_and(|r| !r.window.contains(site))
    }

    fn schedule(&mut self, loc: u64, from: f64) {
        let s = self.streams.get(&loc).expect("stream exists");
        let w = self.source.block(loc, s.counter);
        let t = from + exponential(w[0], stream_rate(&self.cfg.params));
        self.heap.push(Reverse((Due(t), loc)));
    }

    fn note_collision(&mut self, t: f64, labels: Vec<u64>, site: i64) {
        if self.out.collision.is_none() {
            self.out.collision = Some(t);
            if self.cfg.record_log {
                let marks = labels.iter().map(|&l| self.out.points[l as usize].mark).collect();
                self.out.log.push(DualEvent { t, kind: LogKind::Collision, labels, sites: vec![site], marks });
            }
        }
    }

    /// Create a point and attach it to a location. Returns the label.
    fn add_point(&mut self, t: f64, site: i64, mark: f64, generation: u64, parent: Option<u64>) -> u64 {
        let label = self.out.points.len() as u64;
        let frozen = self.frozen(site);
        let mut location = label;
        if let DualKind::Capacity(n) = self.cfg.kind {
            let b = bucket(mark, n);
            if !frozen {
                if let Some(&existing) = self.occupied.get(&(site, b)) {
                    location = existing;
                }
            }
            self.out.points.push(DualPoint {
                site, mark, label, generation, parent, location, born: t, died: None, frozen,
            });
            if location != label {
                let s = self.streams.get_mut(&location).expect("live location");
                s.members.push(label);
                let mut labels = s.members.clone();
                labels.sort_unstable();
                self.note_collision(t, labels, site);
            } else if !frozen {
                self.occupied.insert((site, b), label);
                self.streams.insert(label, Stream { site, counter: 0, members: vec![label], bucket: b });
                self.schedule(label, t);
            }
        } else {
            self.out.points.push(DualPoint {
                site, mark, label, generation, parent, location, born: t, died: None, frozen,
            });
            if !frozen {
                self.streams.insert(label, Stream { site, counter: 0, members: vec![label], bucket: 0 });
                self.schedule(label, t);
            }
        }
        self.live += 1;
        label
    }

    fn run(mut self, start: &[(i64, f64)]) -> InfluenceSet {
        for &(x, w) in start {
            let l = self.add_point(0.0, x, w, 0, None);
            self.out.start_labels.push(l);
        }
        if self.cfg.stop_at_collision && self.out.collision.is_some() {
            self.out.stopped_at = 0.0;
            return self.out;
        }
        let p = self.cfg.params;
        let mut generation = 0u64;
        while let Some(Reverse((Due(t), loc))) = self.heap.pop() {
            if t > self.cfg.t_end {
                break;
            }
            let Some(stream) = self.streams.get_mut(&loc) else { continue };
            let w = self.source.block(loc, stream.counter);
            stream.counter += 1;
            let site = stream.site;
            match decode(&p, site, &w) {
                Action::Death => {
                    let s = self.streams.remove(&loc).expect("live stream");
                    if let DualKind::Capacity(_) = self.cfg.kind {
                        self.occupied.remove(&(s.site, s.bucket));
                    }
                    for &l in &s.members {
                        self.out.points[l as usize].died = Some(t);
                    }
                    self.live -= s.members.len();
                    if self.cfg.record_log {
                        let marks = s.members.iter().map(|&l| self.out.points[l as usize].mark).collect();
                        self.out.log.push(DualEvent {
                            t, kind: LogKind::Death, labels: s.members.clone(), sites: vec![s.site], marks,
                        });
                    }
                    continue;
                }
                Action::Birth { site: target, marks, spare } => {
                    self.schedule(loc, t);
                    if matches!(self.cfg.kind, DualKind::Capacity(1)) {
                        // a single location cannot hold two distinct parents
                        continue;
                    }
                    generation += 1;
                    let parents = {
                        let mut v = self.streams[&loc].members.clone();
                        v.sort_unstable();
                        v
                    };
                    let c1 = self.add_point(t, target, marks[0], generation, Some(loc));
                    let mut m2 = marks[1];
                    if let DualKind::Capacity(n) = self.cfg.kind {
                        let b1 = bucket(marks[0], n);
                        if bucket(m2, n) == b1 && !self.frozen(target) {
                            // the two parents occupy distinct locations; the
                            // shared bucket already counts as a collision
                            self.note_collision(t, vec![c1, self.out.points.len() as u64], target);
                            let shift = 1 + (spare[0] % u64::from(n - 1)) as u32;
                            let b2 = (b1 + shift) % n;
                            m2 = (f64::from(b2) + unit_open(spare[1])) / f64::from(n);
                        }
                    }
                    let c2 = self.add_point(t, target, m2, generation, Some(loc));
                    if self.cfg.record_log {
                        self.out.log.push(DualEvent {
                            t,
                            kind: LogKind::Branch,
                            labels: vec![loc, c1, c2],
                            sites: vec![site, target, target],
                            marks: vec![marks[0], m2],
                        });
                    }
                    self.out.branchings.push(Branching { generation, t, parents, children: [c1, c2] });
                    if self.live > self.cfg.cap {
                        self.out.truncated = true;
                        self.out.stopped_at = t;
                        return self.out;
                    }
                    if self.cfg.stop_at_collision && self.out.collision.is_some() {
                        self.out.stopped_at = t;
                        return self.out;
                    }
                }
            }
        }
        self.out.stopped_at = self.cfg.t_end;
        self.out
    }
}

/// Simulate either dual from the given `(site, mark)` start points.
pub fn simulate(cfg: &DualConfig, start: &[(i64, f64)]) -> Result<InfluenceSet, DualError> {
    if start.is_empty() {
        return Err(DualError::EmptyStart);
    }
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(DualError::BadTime(cfg.t_end));
    }
    if cfg.kind == DualKind::Capacity(0) {
        return Err(DualError::ZeroCapacity);
    }
    let engine = Engine {
        cfg,
        source: BlockSource::new(cfg.seed),
        heap: BinaryHeap::new(),
        streams: HashMap::new(),
        occupied: HashMap::new(),
        out: InfluenceSet {
            kind: cfg.kind,
            t_end: cfg.t_end,
            points: Vec::new(),
            branchings: Vec::new(),
            collision: None,
            truncated: false,
            stopped_at: cfg.t_end,
            log: Vec::new(),
            start_labels: Vec::new(),
        },
        live: 0,
    };
    Ok(engine.run(start))
}

pub fn simulate_limiting_dual(cfg: &DualConfig, start: &[(i64, f64)]) -> Result<InfluenceSet, DualError> {
    let mut c = cfg.clone();
    c.kind = DualKind::Limiting;
    simulate(&c, start)
}

pub fn simulate_n_dual(cfg: &DualConfig, capacity: u32, start: &[(i64, f64)]) -> Result<InfluenceSet, DualError> {
    let mut c = cfg.clone();
    c.kind = DualKind::Capacity(capacity);
    simulate(&c, start)
}

/// Start marks drawn from a stream no label can reach.
pub fn start_marks(seed: u64, count: usize) -> Vec<f64> {
    let w = BlockSource::new(seed).block(u64::MAX, 0);
    w.iter().take(count).map(|&x| unit_open(x)).collect()
}

/// Target densities for the leaf rule.
pub trait SiteField {
    fn density(&self, x: i64) -> f64;
}

impl SiteField for Profile {
    fn density(&self, x: i64) -> f64 {
        self.get(x)
    }
}

/// The same density everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField(pub f64);

impl SiteField for ConstantField {
    fn density(&self, _: i64) -> f64 {
        self.0
    }
}

/// Outcome of the active-label recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveLabels {
    pub active: Vec<bool>,
    pub root_active: bool,
}

/// Leaf rule, then the pairing rule in reverse creation order. A branching
/// is created after everything its children's activity depends on is
/// resolved, so one reverse pass reaches the fixed point.
pub fn resolve_active(iset: &InfluenceSet, field: &dyn SiteField) -> ActiveLabels {
    let mut active: Vec<bool> = iset
        .points
        .iter()
        .map(|p| p.died.is_none() && p.mark <= field.density(p.site))
        .collect();
    for br in iset.branchings.iter().rev() {
        if active[br.children[0] as usize] && active[br.children[1] as usize] {
            for &q in &br.parents {
                active[q as usize] = true;
            }
        }
    }
    let root_active = iset.start_labels.iter().all(|&l| active[l as usize]);
    ActiveLabels { active, root_active }
}
