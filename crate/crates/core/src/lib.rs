//! Scattering-transform alternating projections for inverse problems.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for callers that do not need the choice.

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod fft;
pub mod filterbank;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod operators;
pub mod processes;
pub mod scalar;
pub mod scattering;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Image = ndarray::Array2<f64>;
pub type Image32 = ndarray::Array2<f32>;
pub type FilterBank64 = filterbank::FilterBank<f64>;
pub type FilterBank32 = filterbank::FilterBank<f32>;
pub type ScatteringVector64 = scattering::ScatteringVector<f64>;
pub type ScatteringVector32 = scattering::ScatteringVector<f32>;
pub type LinearEstimator64 = estimator::LinearEstimator<f64>;
pub type LinearEstimator32 = estimator::LinearEstimator<f32>;
pub type Decimation64 = operators::Decimation<f64>;
pub type Decimation32 = operators::Decimation<f32>;
pub type Radon64 = operators::Radon<f64>;
pub type Radon32 = operators::Radon<f32>;
