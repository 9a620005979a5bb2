//! Simulation and numerical analysis for a patch-structured contact process
//! with pair reproduction.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`] holds parameters, states and the mesoscopic transition rates.
//! - [`sim`] simulates the patch chain exactly and runs Monte Carlo harnesses.
//! - [`meanfield`] integrates the lattice ODE and searches for front behaviour.
//! - [`dual`] builds the labelled influence set, the finite-capacity dual and
//!   the exact microscopic duality check.
//! - [`isolated`] analyses a single patch without dispersal.
//! - [`percolation`] evolves wet sets in oriented site percolation.

pub mod dual;
pub mod sumtree;
pub mod isolated;
pub mod meanfield;
pub mod model;
pub mod percolation;
pub mod rng;
pub mod sim;
pub mod stats;

pub use model::{BoundaryPolicy, EventKind, MesoState, ModelError, ModelParams};
pub use stats::Estimate;
