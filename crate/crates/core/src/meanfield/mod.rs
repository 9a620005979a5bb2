//! The mean-field lattice equation and the front machinery built on it.

pub mod detect;
pub mod equilibria;
pub mod ode;
pub mod profile;
pub mod two_patch;

pub use detect::{
    classify, detect_expansion, detect_retreat, front_speed_estimate, phase_portrait, spread_rate_bound,
    Detection, DetectorOptions, FrontCertificate, FrontKind, Outcome, PhaseCell,
};
pub use equilibria::{equilibria, Equilibria, Stability};
pub use ode::{OdeError, OdeOptions};
pub use profile::{
    front_preserved, integrate, integrate_sampled, is_wave_front, rhs, truncation_error_ladder, LadderReport,
    Profile,
};
pub use two_patch::{two_patch_equilibria, two_patch_field, two_patch_flow};
