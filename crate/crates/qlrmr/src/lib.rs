//! Quantized low-rank multivariate regression.
//!
//! Covariates and responses are discretized by a uniform quantizer with
//! random dithering (triangular dither for covariates, uniform dither for
//! responses). Bias-corrected surrogate covariances built from the quantized
//! data feed nuclear-norm constrained and regularized Lasso estimators for
//! vector- and matrix-response regression, and a Monte Carlo harness sweeps
//! sample sizes and quantization levels to measure estimation error rates.

pub mod dither;
pub mod error;
pub mod harness;
pub mod l2rm;
pub mod linalg;
pub mod lrmr;
mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use solver::{EstimateReport, SolverConfig, StepPolicy};

/// Dense real matrix, the carrier for coefficients, covariances and data.
pub type Matrix = nalgebra::DMatrix<f64>;
