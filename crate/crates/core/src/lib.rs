//! Finite-temperature real-time dynamics of the spin-boson model.
//!
//! The bath is discretized into `n_b` harmonic modes, each thermal initial
//! condition is drawn from the coherent-state (Glauber P) representation of the
//! Boltzmann density, and every sample is propagated with the Dirac-Frenkel
//! variational principle using a multi-D1 or multi-D2 Davydov trial state.
//! An exact truncated-Fock propagator and closed-form limits are provided for
//! validation.
//!
//! All quantities are expressed in units of the bath cutoff frequency `omega_c`.

pub mod ansatz;
pub mod config;
pub mod eom;
mod error;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod run;
pub mod sampler;

pub use ansatz::{AnsatzVariant, MultiDState};
pub use config::RunConfig;

pub use eom::{IntegratorConfig, IntegratorScheme, TrajectoryResult};
pub use error::{Error, Result};
pub use model::{DiscretizedBath, SpectralDensityParams, SystemParams};
pub use sampler::{EnsembleResult, ThermalSampleConfig};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
