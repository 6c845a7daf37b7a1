use serde::{Deserialize, Serialize};

use super::ObservationOperator;
use crate::density::normal_log_pdf;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Stochastic Lorenz 63 system observed through `y_n = k_o x_1 + v_n` every
/// `t_s` Euler–Maruyama steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lorenz63Spec {
    pub a: f64,
    pub r: f64,
    pub b: f64,
    pub t_step: f64,
    pub t_s: usize,
    pub k_o: f64,
    pub obs_noise_var: f64,
    /// Initial condition of the ground truth and centre of the filter prior.
    pub x0: [f64; 3],
    /// Per-coordinate variance of the Gaussian filter prior around `x0`.
    pub prior_var: f64,
}

impl Default for Lorenz63Spec {
    fn default() -> Self {
        Self {
            a: 10.0,
            r: 28.0,
            b: 8.0 / 3.0,
            t_step: 1e-3,
            t_s: 40,
            k_o: 0.8,
            obs_noise_var: 1.0,
            x0: [-5.91652, -5.52332, 24.5723],
            prior_var: 1.0,
        }
    }
}

impl Lorenz63Spec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_step > 0.0) || self.t_s == 0 {
            return Err(Error::InvalidParam("Lorenz 63 needs t_step > 0 and t_s >= 1".into()));
        }
        if !(self.obs_noise_var > 0.0) || !(self.prior_var >= 0.0) {
            return Err(Error::InvalidParam("Lorenz 63 variances must be positive".into()));
        }
        Ok(())
    }
}

/// Lorenz 63 drift `(a(x₂ − x₁), r x₁ − x₂ − x₁x₃, x₁x₂ − b x₃)`.
#[inline]
pub fn lorenz63_drift<S: Real>(x: &[S], a: S, r: S, b: S) -> [S; 3] {
    [a * (x[1] - x[0]), r * x[0] - x[1] - x[0] * x[2], x[0] * x[1] - b * x[2]]
}

/// One Euler–Maruyama step with standard normal draws from `rng`.
pub fn euler_maruyama_l63<S: Real>(x: &[S], spec: &Lorenz63Spec, rng: &mut StreamRng) -> StateVector<S> {
    let model = Lorenz63::<S>::new(spec.clone());
    let mut out = [x[0], x[1], x[2]];
    model.inner_step(&mut out, rng);
    out.to_vec()
}

#[derive(Debug, Clone)]
pub struct Lorenz63<S> {
    spec: Lorenz63Spec,
    a: S,
    r: S,
    b: S,
    t_step: S,
    sqrt_t: S,
    k_o: S,
    obs_var: S,
}

impl<S: Real> Lorenz63<S> {
    pub fn new(spec: Lorenz63Spec) -> Self {
        Self {
            a: S::of(spec.a),
            r: S::of(spec.r),
            b: S::of(spec.b),
            t_step: S::of(spec.t_step),
            sqrt_t: S::of(spec.t_step.sqrt()),
            k_o: S::of(spec.k_o),
            obs_var: S::of(spec.obs_noise_var),
            spec,
        }
    }

    pub fn spec(&self) -> &Lorenz63Spec {
        &self.spec
    }

    pub fn initial_state(&self) -> StateVector<S> {
        self.spec.x0.iter().map(|&v| S::of(v)).collect()
    }

    /// Deterministic Euler step followed by the additive `√T u` noise.
    pub fn step_with_noise(&self, x: &mut [S; 3], noise: [S; 3]) {
        let f = lorenz63_drift(x, self.a, self.r, self.b);
        for i in 0..3 {
            x[i] = x[i] + self.t_step * f[i] + self.sqrt_t * noise[i];
        }
    }

    fn inner_step(&self, x: &mut [S; 3], rng: &mut StreamRng) {
        let noise = [
            S::standard_normal(rng),
            S::standard_normal(rng),
            S::standard_normal(rng),
        ];
        self.step_with_noise(x, noise);
    }
}

pub fn build_lorenz63<S: Real>(spec: &Lorenz63Spec) -> Result<Lorenz63<S>> {
    spec.validate()?;
    Ok(Lorenz63::new(spec.clone()))
}

impl<S: Real> StateSpaceModel<S> for Lorenz63<S> {
    fn state_dim(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> StateVector<S> {
        let sd = S::of(self.spec.prior_var.sqrt());
        self.spec
            .x0
            .iter()
            .map(|&v| S::of(v) + sd * S::standard_normal(rng))
            .collect()
    }

    fn sample_transition(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> StateVector<S> {
        let mut s = [x[0], x[1], x[2]];
        for _ in 0..self.spec.t_s {
            self.inner_step(&mut s, rng);
        }
        s.to_vec()
    }

    fn sample_observation(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> Vec<S> {
        vec![self.k_o * x[0] + self.obs_var.sqrt() * S::standard_normal(rng)]
    }

    fn log_likelihood(&self, y: &Observation<S>, x: &[S]) -> S {
        normal_log_pdf(y.values[0], self.k_o * x[0], self.obs_var)
    }

    fn log_likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        let d = self.k_o * (y.values[0] - self.k_o * x[0]) / self.obs_var;
        Some(vec![d, S::zero(), S::zero()])
    }
}

impl<S: Real> ObservationOperator<S> for Lorenz63<S> {
    fn observe(&self, x: &[S], _t: usize) -> Vec<S> {
        vec![self.k_o * x[0]]
    }
    fn obs_noise_var(&self, _t: usize) -> Vec<S> {
        vec![self.obs_var]
    }
}
