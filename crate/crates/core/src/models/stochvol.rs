use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Stochastic volatility model `x_t = μ + φ(x_{t-1} − μ) + σ_v u_t`,
/// `y_t ~ N(0, exp(x_t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochVolSpec {
    pub mu: f64,
    pub sigma_v: f64,
    pub phi: f64,
}

impl Default for StochVolSpec {
    fn default() -> Self {
        Self {
            mu: -0.2,
            sigma_v: 0.15,
            phi: 0.97,
        }
    }
}

impl StochVolSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidParam(format!("need |phi| < 1, got {}", self.phi)));
        }
        if !(self.sigma_v > 0.0) {
            return Err(Error::InvalidParam(format!("need sigma_v > 0, got {}", self.sigma_v)));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParam("mu must be finite".into()));
        }
        Ok(())
    }

    /// Stationary variance `σ_v² / (1 − φ²)`.
    pub fn stationary_var(&self) -> f64 {
        self.sigma_v * self.sigma_v / (1.0 - self.phi * self.phi)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StochVol<S> {
    spec: StochVolSpec,
    mu: S,
    sigma_v: S,
    phi: S,
    prior_sd: S,
    ln_two_pi: S,
}

impl<S: Real> StochVol<S> {
    pub fn spec(&self) -> &StochVolSpec {
        &self.spec
    }
}

pub fn build_stochvol<S: Real>(spec: &StochVolSpec) -> Result<StochVol<S>> {
    spec.validate()?;
    Ok(StochVol {
        spec: *spec,
        mu: S::of(spec.mu),
        sigma_v: S::of(spec.sigma_v),
        phi: S::of(spec.phi),
        prior_sd: S::of(spec.stationary_var().sqrt()),
        ln_two_pi: S::of(std::f64::consts::TAU.ln()),
    })
}

impl<S: Real> StateSpaceModel<S> for StochVol<S> {
    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> StateVector<S> {
        vec![self.mu + self.prior_sd * S::standard_normal(rng)]
    }

    fn sample_transition(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> StateVector<S> {
        vec![self.mu + self.phi * (x[0] - self.mu) + self.sigma_v * S::standard_normal(rng)]
    }

    fn sample_observation(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> Vec<S> {
        vec![(x[0] * S::of(0.5)).exp() * S::standard_normal(rng)]
    }

    fn log_likelihood(&self, y: &Observation<S>, x: &[S]) -> S {
        let y = y.values[0];
        -S::of(0.5) * (self.ln_two_pi + x[0] + y * y * (-x[0]).exp())
    }

    fn log_likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        let y = y.values[0];
        Some(vec![S::of(0.5) * (y * y * (-x[0]).exp() - S::one())])
    }

    fn transition_mean(&self, x: &[S], _t: usize) -> Option<StateVector<S>> {
        Some(vec![self.mu + self.phi * (x[0] - self.mu)])
    }
}
