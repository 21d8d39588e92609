//! Simulation and verification toolkit for the spectrally forced stochastic
//! Burgers equation on the circle.
//!
//! The solution is computed by three independent routes — direct explicit
//! stepping of the viscous equation, the exponential-splitting transform
//! route with walker-average cross-checks, and inviscid least-action
//! minimization — all driven by the same stored Brownian increments, so
//! route comparisons are pathwise. Ensemble moments are estimated by Monte
//! Carlo with batch-means confidence intervals and audited against the
//! closed-form limiting moments and the explicit probabilistic bounds.
//!
//! All numerics are generic over the scalar type (`f32`/`f64`) through the
//! [`Real`] trait; `f64` aliases are exported at the crate root.

pub mod colehopf;
pub mod config;
pub mod error;
pub mod experiments;
pub mod forcing;
pub mod moments;
pub mod scalar;
pub mod spectrum;
pub mod stats;
pub mod variational;
pub mod viscous;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default-precision aliases.
pub type Spectrum64 = spectrum::Spectrum<f64>;
pub type TimeGrid64 = forcing::TimeGrid<f64>;
pub type ForcingPath64 = forcing::ForcingPath<f64>;
pub type Field64 = viscous::Field<f64>;
pub type PositiveField64 = colehopf::PositiveField<f64>;
pub type ViscousConfig64 = viscous::ViscousConfig<f64>;
pub type MinimizingPath64 = variational::MinimizingPath<f64>;
