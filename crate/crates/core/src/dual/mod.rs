//! Dual processes: the labelled influence set, the finite-capacity dual with
//! collision tracking, and checks against forward dynamics.

mod agreement;
mod harness;
mod influence;
pub mod micro;

pub use agreement::{occupation_agreement_mc, AgreementConfig, AgreementReport};
pub use harness::{
    branching_moment_mc, collision_probability_mc, collision_times, phi2_mc, phi_mc, CappedEstimate, LAZY_BUDGET,
};
pub use influence::{
    bucket, resolve_active, simulate, simulate_limiting_dual, simulate_n_dual, start_marks, ActiveLabels,
    Branching, ConstantField, DualConfig, DualError, DualEvent, DualKind, DualPoint, InfluenceSet, LogKind,
    Restriction, SiteField,
};
