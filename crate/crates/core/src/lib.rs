//! Simulator for the regularized Keller-Segel(-Navier)-Stokes system with
//! saturated tensor sensitivity on a staggered box grid, together with the
//! diagnostics that track its a priori estimates and an exact checker for
//! the exponent arithmetic of the boundedness argument.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod exponents;
pub mod fluid;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod regularization;
pub mod runner;
mod separable;
pub mod snapshot;
pub mod state;
pub mod transport;

pub use config::{parse_config, RunConfig, SweepConfig};
pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarBc, ScalarField, VectorField, VelocityBc};
pub use regularization::ModelParams;
pub use runner::{run, sweep, HaltReason, RunReport, SweepReport};
pub use state::SimState;
