//! Concrete state-space models and ground-truth simulation.

mod linear_gaussian;
mod lorenz63;
mod lorenz96;
mod stochvol;
mod tracking;

pub use linear_gaussian::{build_linear_gaussian, LinearGaussian, LinearGaussianSpec};
pub use lorenz63::{build_lorenz63, euler_maruyama_l63, lorenz63_drift, Lorenz63, Lorenz63Spec};
pub use lorenz96::{build_lorenz96, lorenz96_drift, lorenz96_initial_state, Lorenz96, Lorenz96Spec};
pub use stochvol::{build_stochvol, StochVol, StochVolSpec};
pub use tracking::{build_tracking, rss_db, velocity_from_positions, Tracking, TrackingSpec};

use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Ground truth `x_0, x_1, …, x_T` and observations `y_1, …, y_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    /// `states[0]` is `x_0`; `states[t]` pairs with `observations[t - 1]`.
    pub states: Vec<StateVector<S>>,
    pub observations: Vec<Observation<S>>,
}

impl<S: Real> Trajectory<S> {
    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    /// `x_1, …, x_T`.
    pub fn hidden_states(&self) -> &[StateVector<S>] {
        &self.states[1..]
    }
}

/// Simulate `horizon` steps starting from a prior draw.
pub fn simulate<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    horizon: usize,
    stream: &RngStream,
) -> Trajectory<S> {
    let x0 = model.sample_prior(&mut stream.child(crate::rng::label::INIT).rng());
    simulate_from(model, x0, horizon, stream)
}

/// Simulate `horizon` steps from a given `x_0`.
pub fn simulate_from<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    x0: StateVector<S>,
    horizon: usize,
    stream: &RngStream,
) -> Trajectory<S> {
    use crate::rng::label;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon);
    states.push(x0);
    for t in 1..=horizon {
        let step = stream.child(t as u64);
        let x = model.sample_transition(&states[t - 1], t, &mut step.child(label::PROPAGATE).rng());
        let y = model.sample_observation(&x, t, &mut step.child(label::OBSERVE).rng());
        states.push(x);
        observations.push(Observation::new(y, t));
    }
    Trajectory { states, observations }
}

/// Linear-transition model with a differentiable observation function; the
/// structure needed by the extended Kalman filter.
pub trait GaussianApproximation<S: Real> {
    fn prior_mean(&self) -> Vec<S>;
    fn prior_cov(&self) -> Matrix<S>;
    fn transition_matrix(&self, t: usize) -> Matrix<S>;
    /// Additive input of the linear transition (zero for most models).
    fn transition_offset(&self, _t: usize) -> Vec<S> {
        vec![S::zero(); self.prior_mean().len()]
    }
    fn process_cov(&self) -> Matrix<S>;
    fn observation_function(&self, x: &[S], t: usize) -> Vec<S>;
    fn observation_jacobian(&self, x: &[S], t: usize) -> Matrix<S>;
    fn observation_cov(&self, t: usize) -> Matrix<S>;
}

/// Observation mean `h_t(x)` plus diagonal Gaussian noise; what the ensemble
/// Kalman filter needs besides the transition sampler.
pub trait ObservationOperator<S: Real> {
    fn observe(&self, x: &[S], t: usize) -> Vec<S>;
    fn obs_noise_var(&self, t: usize) -> Vec<S>;
}
