//! Semimartingale reflecting Brownian motion in the orthant: model
//! validation, closed-form multi-scale approximations, simulation,
//! BAR diagnostics and multilevel Monte Carlo.

pub mod analysis;
pub mod approx;
pub mod bar;
pub mod classes;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod lcp;
pub mod linalg;
pub mod mlmc;
pub mod model;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
