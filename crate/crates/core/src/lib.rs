//! Collision-warning calibration from brake-response-time (PRT) distributions.
//!
//! - [`stats`]: distribution families, Φ/Φ⁻¹, adaptive quadrature, seeded streams.
//! - [`population`]: the population lognormal and the mixture-of-means model.
//! - [`calibration`]: warning thresholds, false-alarm rates and FAR curves.
//! - [`estimator`]: sequential per-driver PRT estimation.
//! - [`sim`]: Monte Carlo oracle and the car-following layer.

pub mod calibration;
pub mod error;
pub mod estimator;
pub mod population;
pub mod sim;
mod simplex;
pub mod stats;

pub use error::{Error, Result};
