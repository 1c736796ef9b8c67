//! Numerical laboratory for weakly interacting diffusions and their
//! mean-field limit.
//!
//! The crate simulates the N-particle Langevin system with pairwise
//! interaction, solves the associated nonlinear Fokker-Planck (McKean-Vlasov)
//! equation on a periodic or truncated-line grid, locates steady states and
//! phase transitions, and estimates entropy / Fisher-information / Wasserstein
//! functionals together with log-Sobolev bounds and equilibrium fluctuation
//! statistics.
//!
//! Core math is generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`); concrete `f64` aliases live at the crate root and are
//! what the CLI uses.

pub mod config;
pub mod error;
pub mod fluctuations;
pub mod meanfield;
pub mod metrics;
pub mod model;
pub mod particle;
pub mod rng;
pub mod runner;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` model specification.
pub type PotentialSpec64 = model::PotentialSpec<f64>;
/// `f64` particle ensemble.
pub type ParticleEnsemble64 = particle::ParticleEnsemble<f64>;
/// `f64` grid density.
pub type GridDensity64 = meanfield::GridDensity<f64>;
/// `f64` fluctuation field.
pub type FluctuationField64 = fluctuations::FluctuationField<f64>;
