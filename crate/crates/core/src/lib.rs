//! Dissipative transport of carriers in a tilted one-dimensional
//! tight-binding ring.
//!
//! The crate propagates the Lindblad master equation for the single-carrier
//! density matrix in the gauge (interaction) frame of the static force,
//! extracts stationary quasimomentum distributions and drift currents, and
//! ships the closed-form drift-current results as reference oracles together
//! with an Esaki-Tsu least-squares fitter.

pub mod cli;
pub mod error;
pub mod fit;
pub mod fourier;
pub mod lattice;
pub mod observables;
pub mod oracles;
pub mod propagator;
pub mod relaxation;
pub mod specfun;

pub use error::{Error, Result};
pub use lattice::{Basis, DensityMatrix, InverseTemperature, LatticeConfig};
