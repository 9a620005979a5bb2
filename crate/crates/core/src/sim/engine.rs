use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{pairs, BoundaryPolicy, EventKind, MesoState, ModelError, ModelParams, Window};
use crate::rng::replica_rng;
use crate::sumtree::SumTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("horizon must be positive and finite (got {0})")]
    Horizon(f64),
    #[error("sample interval must be positive (got {0})")]
    SampleInterval(f64),
    #[error("block half-width {block} exceeds window half-width {window}")]
    BlockTooWide { block: u32, window: u32 },
    #[error("explicit initial state has {got} entries, window needs {expected}")]
    ExplicitLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Origin full, everything else empty.
    SingleFullPatch,
    /// Patches in `[-L, L]` full.
    Block(u32),
    /// One count per window site, left to right.
    Explicit(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub half_width: u32,
    pub boundary: BoundaryPolicy,
    pub horizon: f64,
    pub seed: u64,
    pub initial: InitialCondition,
    /// Snapshot spacing; `None` keeps only the first and last states.
    pub sample_interval: Option<f64>,
    pub record_events: bool,
    /// [`run`] stops with [`Terminal::EventCap`] after this many events.
    #[serde(default)]
    pub max_events: Option<u64>,
}

impl SimConfig {
    pub fn new(params: ModelParams, half_width: u32, horizon: f64, seed: u64) -> Self {
        SimConfig {
            params,
            half_width,
            boundary: BoundaryPolicy::Lower,
            horizon,
            seed,
            initial: InitialCondition::SingleFullPatch,
            sample_interval: None,
            record_events: false,
            max_events: None,
        }
    }

    pub fn window(&self) -> Window {
        Window::symmetric(self.half_width)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        crate::model::validate_params(self.params)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::Horizon(self.horizon));
        }
        if let Some(dt) = self.sample_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ConfigError::SampleInterval(dt));
            }
        }
        self.initial_counts().map(|_| ())
    }

    pub fn initial_counts(&self) -> Result<Vec<u32>, ConfigError> {
        let w = self.window();
        let n = self.params.capacity;
        let xi = match &self.initial {
            InitialCondition::SingleFullPatch => {
                w.sites().map(|x| if x == 0 { n } else { 0 }).collect()
            }
            InitialCondition::Block(l) => {
                if *l > self.half_width {
                    return Err(ConfigError::BlockTooWide { block: *l, window: self.half_width });
                }
                let l = i64::from(*l);
                w.sites().map(|x| if x.abs() <= l { n } else { 0 }).collect()
            }
            InitialCondition::Explicit(v) => {
                if v.len() != w.len() {
                    return Err(ConfigError::ExplicitLength { got: v.len(), expected: w.len() });
                }
                v.clone()
            }
        };
        MesoState::new(w, xi.clone(), self.boundary, n)?;
        Ok(xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Extinct { time: f64 },
    HorizonReached,
    EventCap { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub window: Window,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<u32>>,
    pub terminal: Terminal,
    /// Set when a patch within range of the edge was occupied under the lower
    /// policy, i.e. the restricted chain may have lost births.
    pub window_exit_warning: bool,
    pub event_count: u64,
    pub events: Vec<TimedEvent>,
}

impl Trajectory {
    pub fn last(&self) -> &[u32] {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    pub fn extinct(&self) -> bool {
        matches!(self.terminal, Terminal::Extinct { .. })
    }

    pub fn state_at(&self, k: usize, boundary: BoundaryPolicy) -> MesoState {
        MesoState {
            window: self.window,
            xi: self.snapshots[k].clone(),
            boundary,
            time: self.times[k],
        }
    }
}

/// Result of one call to [`Simulator::step_until`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// An event fired. `None` is a rejected proposal that changes nothing.
    Event { t: f64, event: Option<EventKind> },
    /// The limit time was reached first; the clock now reads the limit.
    Limit,
    /// Total rate is zero.
    Absorbed,
}

/// Gillespie simulator for the restricted chain.
///
/// Each site carries the total rate of the events it initiates: its deaths,
/// its inner births, dispersal proposals from it, and under the upper policy
/// births sent in by ghost neighbours. A dispersal proposal from `y` picks a
/// neighbour `x` uniformly among the `2M` and is accepted with probability
/// `(N - ξ(x))/N`, which realises the outer birth rate exactly while keeping
/// each update to the two touched sites.
pub struct Simulator {
    params: ModelParams,
    window: Window,
    boundary: BoundaryPolicy,
    xi: Vec<u32>,
    tree: SumTree,
    inner: Vec<f64>,
    proposal: Vec<f64>,
    ghost_in: Vec<f64>,
    occupied: u64,
    time: f64,
    rng: ChaCha8Rng,
    edge_warning: bool,
    /// Sites whose count may differ from the last reset; lets a reset cost
    /// the size of the previous run rather than the window.
    touched: Vec<usize>,
    marked: Vec<bool>,
    built: bool,
    /// Nonzero entries of the last initial configuration.
    start: Vec<(usize, u32)>,
}

impl Simulator {
    pub fn new(
        params: ModelParams,
        window: Window,
        boundary: BoundaryPolicy,
        initial: &[u32],
        rng: ChaCha8Rng,
    ) -> Self {
        let n = params.capacity;
        let inner = (0..=n)
            .map(|k| params.inner * pairs(k) * f64::from(n - k) / params.pair_norm())
            .collect();
        let proposal = (0..=n).map(|k| params.outer * pairs(k) / f64::from(n - 1)).collect();
        let m = i64::from(params.range);
        let per_target = params.outer / (2.0 * m as f64);
        let ghost_in = window
            .sites()
            .map(|x| match boundary {
                BoundaryPolicy::Lower => 0.0,
                BoundaryPolicy::Upper => {
                    let g = (window.lo - (x - m)).max(0) + ((x + m) - window.hi).max(0);
                    per_target * pairs(n) / params.pair_norm() * g as f64
                }
            })
            .collect();
        let mut sim = Simulator {
            params,
            window,
            boundary,
            xi: vec![0; window.len()],
            tree: SumTree::new(window.len()),
            inner,
            proposal,
            ghost_in,
            occupied: 0,
            time: 0.0,
            rng,
            edge_warning: false,
            touched: Vec::new(),
            marked: vec![false; window.len()],
            built: false,
            start: Vec::new(),
        };
        sim.reset(initial, sim.rng.clone());
        sim
    }

    /// Restart from `initial` with a fresh generator, reusing allocations.
    pub fn reset(&mut self, initial: &[u32], rng: ChaCha8Rng) {
        assert_eq!(initial.len(), self.window.len());
        self.time = 0.0;
        self.rng = rng;
        self.edge_warning = false;
        if self.built {
            for i in std::mem::take(&mut self.touched) {
                self.marked[i] = false;
                self.xi[i] = initial[i];
                self.tree.set(i, self.site_rate(i));
            }
        } else {
            self.xi.copy_from_slice(initial);
            let rates: Vec<f64> = (0..self.xi.len()).map(|i| self.site_rate(i)).collect();
            self.tree.rebuild(rates);
            self.built = true;
        }
        self.start = initial.iter().enumerate().filter(|(_, &k)| k > 0).map(|(i, &k)| (i, k)).collect();
        self.apply_start();
    }

    /// Restart from the configuration of the last reset; costs the size of
    /// the previous run, not of the window.
    pub fn restart(&mut self, rng: ChaCha8Rng) {
        self.time = 0.0;
        self.rng = rng;
        self.edge_warning = false;
        for i in std::mem::take(&mut self.touched) {
            self.marked[i] = false;
            if self.xi[i] != 0 {
                self.xi[i] = 0;
                self.tree.set(i, self.site_rate(i));
            }
        }
        self.apply_start();
    }

    fn apply_start(&mut self) {
        self.occupied = 0;
        for j in 0..self.start.len() {
            let (i, k) = self.start[j];
            if self.xi[i] != k {
                self.xi[i] = k;
                self.tree.set(i, self.site_rate(i));
            }
            self.occupied += u64::from(k);
            self.touch(i);
            self.check_edge(i);
        }
    }

    fn touch(&mut self, i: usize) {
        if !self.marked[i] {
            self.marked[i] = true;
            self.touched.push(i);
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> &[u32] {
        &self.xi
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    pub fn is_extinct(&self) -> bool {
        self.occupied == 0
    }

    pub fn window_exit_warning(&self) -> bool {
        self.edge_warning
    }

    pub fn state(&self) -> MesoState {
        MesoState { window: self.window, xi: self.xi.clone(), boundary: self.boundary, time: self.time }
    }

    fn site_rate(&self, i: usize) -> f64 {
        let k = self.xi[i] as usize;
        let free = f64::from(self.params.capacity - self.xi[i]);
        k as f64 + self.inner[k] + self.proposal[k] + self.ghost_in[i] * free
    }

    fn check_edge(&mut self, i: usize) {
        if self.boundary == BoundaryPolicy::Lower && self.xi[i] > 0 {
            let m = self.params.range as usize;
            if i < m || i + m >= self.xi.len() {
                self.edge_warning = true;
            }
        }
    }

    fn change(&mut self, i: usize, up: bool) {
        self.touch(i);
        if up {
            self.xi[i] += 1;
            self.occupied += 1;
            self.check_edge(i);
        } else {
            self.xi[i] -= 1;
            self.occupied -= 1;
        }
        self.tree.set(i, self.site_rate(i));
    }

    /// Draw the time of the next event without applying it, or `None` when
    /// the total rate is zero. Discarding the draw is harmless because the
    /// waiting time is memoryless.
    pub fn next_event_time(&mut self) -> Option<f64> {
        let total = self.tree.total();
        if total <= 0.0 {
            return None;
        }
        let u: f64 = self.rng.random();
        Some(self.time - (1.0 - u).ln() / total)
    }

    /// Apply the event drawn by [`Simulator::next_event_time`] at time `t`.
    pub fn fire_at(&mut self, t: f64) -> Option<EventKind> {
        self.time = t;
        let i = self.tree.find(self.rng.random::<f64>() * self.tree.total());
        self.fire(i)
    }

    /// Advance by one event unless it would happen after `limit`.
    pub fn step_until(&mut self, limit: f64) -> Step {
        match self.next_event_time() {
            None => Step::Absorbed,
            Some(t) if t > limit => {
                self.time = limit;
                Step::Limit
            }
            Some(t) => Step::Event { t, event: self.fire_at(t) },
        }
    }

    fn fire(&mut self, i: usize) -> Option<EventKind> {
        let x = self.window.site(i);
        let k = self.xi[i] as usize;
        let mut r = self.rng.random::<f64>() * self.site_rate(i);
        if r < k as f64 {
            self.change(i, false);
            return Some(EventKind::Death(x));
        }
        r -= k as f64;
        if r < self.inner[k] {
            self.change(i, true);
            return Some(EventKind::InnerBirth(x));
        }
        r -= self.inner[k];
        let m = i64::from(self.params.range);
        if r < self.proposal[k] {
            let j = self.rng.random_range(0..2 * m);
            let target = if j < m { x - m + j } else { x + j - m + 1 };
            let ti = self.window.index(target)?;
            let free = self.params.capacity - self.xi[ti];
            if self.rng.random_range(0..self.params.capacity) < free {
                self.change(ti, true);
                return Some(EventKind::OuterBirth { source: x, target });
            }
            return None;
        }
        if self.ghost_in[i] == 0.0 {
            return None;
        }
        let left = (self.window.lo - (x - m)).max(0);
        let right = ((x + m) - self.window.hi).max(0);
        let j = self.rng.random_range(0..left + right);
        let source = if j < left { self.window.lo - 1 - j } else { self.window.hi + 1 + (j - left) };
        self.change(i, true);
        Some(EventKind::OuterBirth { source, target: x })
    }
}

/// Simulate until extinction or the horizon.
pub fn run(cfg: &SimConfig) -> Result<Trajectory, ConfigError> {
    cfg.validate()?;
    let init = cfg.initial_counts()?;
    let mut sim = Simulator::new(cfg.params, cfg.window(), cfg.boundary, &init, replica_rng(cfg.seed, 0));
    Ok(record(&mut sim, cfg))
}

/// Drive a prepared simulator and collect the trajectory.
pub(crate) fn record(sim: &mut Simulator, cfg: &SimConfig) -> Trajectory {
    let mut traj = Trajectory {
        window: sim.window(),
        times: vec![0.0],
        snapshots: vec![sim.counts().to_vec()],
        terminal: Terminal::HorizonReached,
        window_exit_warning: false,
        event_count: 0,
        events: Vec::new(),
    };
    let mut next_grid = 1u64;
    let grid_time = |k: u64| cfg.sample_interval.map_or(f64::INFINITY, |dt| k as f64 * dt);
    if sim.is_extinct() {
        traj.terminal = Terminal::Extinct { time: 0.0 };
        traj.window_exit_warning = sim.window_exit_warning();
        return traj;
    }
    loop {
        let Some(t) = sim.next_event_time().filter(|&t| t <= cfg.horizon) else {
            while grid_time(next_grid) <= cfg.horizon {
                traj.times.push(grid_time(next_grid));
                traj.snapshots.push(sim.counts().to_vec());
                next_grid += 1;
            }
            if *traj.times.last().unwrap() < cfg.horizon {
                traj.times.push(cfg.horizon);
                traj.snapshots.push(sim.counts().to_vec());
            }
            break;
        };
        while grid_time(next_grid) < t {
            traj.times.push(grid_time(next_grid));
            traj.snapshots.push(sim.counts().to_vec());
            next_grid += 1;
        }
        if let Some(ev) = sim.fire_at(t) {
            traj.event_count += 1;
            if cfg.record_events {
                traj.events.push(TimedEvent { t, event: ev });
            }
        }
        if sim.is_extinct() {
            traj.times.push(t);
            traj.snapshots.push(sim.counts().to_vec());
            traj.terminal = Terminal::Extinct { time: t };
            break;
        }
        if cfg.max_events.is_some_and(|cap| traj.event_count >= cap) {
            traj.times.push(t);
            traj.snapshots.push(sim.counts().to_vec());
            traj.terminal = Terminal::EventCap { time: t };
            break;
        }
    }
    traj.window_exit_warning = sim.window_exit_warning();
    traj
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64, n: u32, m: u32) -> ModelParams {
        ModelParams::new(a, b, n, m).unwrap()
    }

    #[test]
    fn empty_start_is_extinct_at_zero() {
        let mut cfg = SimConfig::new(params(1.0, 1.0, 5, 1), 3, 10.0, 1);
        cfg.initial = InitialCondition::Explicit(vec![0; 7]);
        let t = run(&cfg).unwrap();
        assert_eq!(t.terminal, Terminal::Extinct { time: 0.0 });
        assert_eq!(t.snapshots.len(), 1);
    }

    #[test]
    fn snapshots_on_grid() {
        let mut cfg = SimConfig::new(params(6.0, 3.0, 20, 1), 10, 5.0, 3);
        cfg.sample_interval = Some(0.5);
        let t = run(&cfg).unwrap();
        assert!(t.times.windows(2).all(|w| w[0] < w[1]));
        if !t.extinct() {
            assert_eq!(t.times.len(), 11);
            assert_eq!(*t.times.last().unwrap(), 5.0);
        } else {
            assert!(t.last().iter().all(|&k| k == 0));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut cfg = SimConfig::new(params(5.0, 2.0, 10, 2), 8, 4.0, 11);
        cfg.record_events = true;
        let a = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn events_match_state_changes() {
        let mut cfg = SimConfig::new(params(4.0, 2.0, 6, 2), 4, 3.0, 5);
        cfg.boundary = BoundaryPolicy::Upper;
        cfg.record_events = true;
        let t = run(&cfg).unwrap();
        let mut s = t.state_at(0, cfg.boundary);
        for e in &t.events {
            s.apply(e.event, 6).unwrap();
            if let EventKind::OuterBirth { source, target } = e.event {
                let d = (source - target).abs();
                assert!((1..=2).contains(&d));
            }
        }
        assert_eq!(&s.xi[..], t.last());
    }

    #[test]
    fn edge_occupancy_warns_under_lower_policy() {
        let mut cfg = SimConfig::new(params(0.0, 0.0, 3, 1), 2, 1.0, 0);
        cfg.initial = InitialCondition::Block(2);
        assert!(run(&cfg).unwrap().window_exit_warning);
        cfg.boundary = BoundaryPolicy::Upper;
        assert!(!run(&cfg).unwrap().window_exit_warning);
    }

    #[test]
    fn config_errors() {
        let mut cfg = SimConfig::new(params(1.0, 1.0, 5, 1), 3, 0.0, 1);
        assert!(matches!(cfg.validate(), Err(ConfigError::Horizon(_))));
        cfg.horizon = 1.0;
        cfg.initial = InitialCondition::Block(4);
        assert!(cfg.validate().is_err());
        cfg.initial = InitialCondition::Explicit(vec![6; 7]);
        assert!(cfg.validate().is_err());
    }
}
