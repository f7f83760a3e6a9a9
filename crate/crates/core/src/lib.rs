//! Numerical scattering theory for time-periodic potentials in a uniform
//! electric field: gauge coefficients, exact free propagation, split-step
//! propagation, commutator functionals and X-ray reconstruction.

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod error;
mod fft;
pub mod field;
pub mod gauge;
pub mod grid;
pub mod io;
pub mod potential;
pub mod propagator;
pub mod quadrature;
pub mod reconstruction;
pub mod scattering;

pub use error::{Error, ErrorKind, Result};
pub use field::{ElectricField, GaugeCoefficients, Harmonic};
pub use grid::{inner, make_gaussian, Grid, GridSpec, WavePacketSpec, WaveState};
pub use potential::{Potential, PotentialModel};
pub use propagator::{Hamiltonian, PropagationPlan};
