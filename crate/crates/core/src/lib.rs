//! Sequential Monte Carlo with nudged particles.
//!
//! The crate is generic over the floating-point type through [`Real`]; the
//! `*64` aliases at the crate root fix it to `f64`, which is what the
//! experiment harness uses.

pub mod density;
pub mod error;
pub mod filters;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod nudging;
pub mod rng;
pub mod scalar;
pub mod ssm;

pub use error::{Error, Result};
pub use rng::{RngStream, StreamRng};
pub use scalar::Real;
pub use ssm::{
    effective_sample_size, finite_difference_gradient, normalize_log_weights, Observation, ParticleEnsemble,
    StateSpaceModel, StateVector,
};

/// `f64` instantiations used by the harness.
pub type Ensemble64 = ParticleEnsemble<f64>;
pub type Observation64 = Observation<f64>;
pub type ParticleFilter64 = filters::ParticleFilter<f64>;
pub type FilterState64 = filters::FilterState<f64>;
pub type FilterOutput64 = filters::FilterOutput<f64>;
pub type NudgeOperator64 = nudging::NudgeOperator<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type LinearGaussian64 = models::LinearGaussian<f64>;
pub type Lorenz63Model64 = models::Lorenz63<f64>;
pub type Lorenz96Model64 = models::Lorenz96<f64>;
pub type StochVol64 = models::StochVol<f64>;
pub type Tracking64 = models::Tracking<f64>;
pub type InnerFilter64 = inference::InnerFilter<f64>;

/// `f32` instantiations.
pub type Ensemble32 = ParticleEnsemble<f32>;
pub type Observation32 = Observation<f32>;
pub type ParticleFilter32 = filters::ParticleFilter<f32>;
pub type LinearGaussian32 = models::LinearGaussian<f32>;
pub type Lorenz96Model32 = models::Lorenz96<f32>;
