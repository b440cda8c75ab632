//! Linked importance sampling, annealed importance sampling and bridge
//! sampling for ratios of normalizing constants.

pub mod bridges;
pub mod distributions;
pub mod dragging;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod logspace;
pub mod oracles;
pub mod quadrature;

pub use error::{Error, Result};
