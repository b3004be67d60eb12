//! Teacher-student two-layer networks and their Gaussian-equivalent
//! generalized linear model.

pub mod config;
pub mod data;
pub mod error;
pub mod estimators;
pub mod model;
pub mod posterior;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

/// Importance estimates whose effective sample size falls below this are flagged.
pub const ESS_FLOOR: f64 = 50.0;
