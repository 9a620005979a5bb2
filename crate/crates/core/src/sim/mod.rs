//! Exact simulation of the patch chain and the Monte Carlo harnesses built on it.

mod coupled;
mod engine;
mod harness;

pub use coupled::{coupled_run, CoupledError, CoupledRun};
pub use engine::{
    run, ConfigError, InitialCondition, SimConfig, Simulator, Step, Terminal, TimedEvent,
    Trajectory,
};
pub use harness::{
    extinction_times_mc, final_site_counts, origin_occupation_mc, survival_probability_mc, vacant_zone_detector,
    vacant_zone_frequency, OccupationSummary,
};
