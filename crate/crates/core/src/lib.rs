//! Simulation and verification toolkit for stochastic localization.
//!
//! The same measure-valued process is built several ways (tilt SDE, weighted
//! particles, Gaussian channel, reversed diffusion, Polchinski flow, Föllmer
//! bridge, proximal sampler) and the modules here compare them against each
//! other and against Gaussian closed forms.

pub mod bridge;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod linalg;
pub mod localize;
pub mod polchinski;
pub mod rgd;
pub mod rng;
pub mod sde;
pub mod suites;
pub mod targets;

pub use error::{Error, Result};
