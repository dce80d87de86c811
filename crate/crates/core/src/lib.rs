//! Simulator for the discrete quantum walk of a single trapped ion in phase
//! space.
//!
//! Three fidelity tiers are provided:
//!
//! - [`walk::line_walk`] — the exact discrete-line walk with orthogonal
//!   position states, plus its classical comparator;
//! - [`walk::run_phase_walk`] — the walk realized with exact coherent
//!   displacements on a truncated Fock space;
//! - [`dynamics::run_dynamics_walk`] — full time-dependent integration of the
//!   spin-dependent optical dipole force beyond the Lamb-Dicke regime, with
//!   the experimental half-drive / π-pulse / half-drive / π-pulse sequence.
//!
//! The [`readout`] module emulates the measurement chain: branch transfer,
//! displace-back, blue-sideband flopping, population extraction by
//! nonnegative least squares, and fluorescence shot noise.

pub mod coin;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod nnls;
pub mod readout;
pub mod rng;
pub mod walk;

pub use error::{Error, Result};
