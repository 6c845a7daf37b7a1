use serde::{Deserialize, Serialize};

use super::ObservationOperator;
use crate::density::normal_log_pdf;
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Stochastic Lorenz 96 system with circular indexing; every other coordinate
/// (1-based odd indices) is observed every `t_s` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lorenz96Spec {
    pub d: usize,
    pub forcing: f64,
    pub t_step: f64,
    pub t_s: usize,
    pub obs_noise_var: f64,
    /// Inner steps run from a uniform draw to produce the initial state.
    pub burn_in: usize,
    /// Per-coordinate variance of the Gaussian filter prior.
    pub prior_var: f64,
}

impl Default for Lorenz96Spec {
    fn default() -> Self {
        Self {
            d: 40,
            forcing: 8.0,
            t_step: 1e-2,
            t_s: 10,
            obs_noise_var: 1.0,
            burn_in: 1000,
            prior_var: 1.0,
        }
    }
}

impl Lorenz96Spec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 4 {
            return Err(Error::InvalidParam(format!("Lorenz 96 needs d >= 4, got {}", self.d)));
        }
        if !(self.t_step > 0.0) || self.t_s == 0 {
            return Err(Error::InvalidParam("Lorenz 96 needs t_step > 0 and t_s >= 1".into()));
        }
        if !(self.obs_noise_var > 0.0) || !(self.prior_var >= 0.0) {
            return Err(Error::InvalidParam("Lorenz 96 variances must be positive".into()));
        }
        Ok(())
    }

    /// Number of observed coordinates, `⌊d/2⌋`.
    pub fn obs_dim(&self) -> usize {
        self.d / 2
    }
}

/// Drift `(x_{i+1} − x_{i−2}) x_{i−1} − x_i + F` with circular indices.
pub fn lorenz96_drift<S: Real>(x: &[S], forcing: S, out: &mut [S]) {
    let d = x.len();
    for i in 0..d {
        let xp1 = x[(i + 1) % d];
        let xm1 = x[(i + d - 1) % d];
        let xm2 = x[(i + d - 2) % d];
        out[i] = (xp1 - xm2) * xm1 - x[i] + forcing;
    }
}

#[derive(Debug, Clone)]
pub struct Lorenz96<S> {
    spec: Lorenz96Spec,
    forcing: S,
    t_step: S,
    sqrt_t: S,
    obs_var: S,
    center: Vec<S>,
}

impl<S: Real> Lorenz96<S> {
    /// Model whose filter prior is centred at `center`.
    pub fn new(spec: Lorenz96Spec, center: Vec<S>) -> Result<Self> {
        spec.validate()?;
        if center.len() != spec.d {
            return Err(Error::DimensionMismatch {
                what: "Lorenz 96 prior centre",
                expected: spec.d,
                found: center.len(),
            });
        }
        Ok(Self {
            forcing: S::of(spec.forcing),
            t_step: S::of(spec.t_step),
            sqrt_t: S::of(spec.t_step.sqrt()),
            obs_var: S::of(spec.obs_noise_var),
            spec,
            center,
        })
    }

    pub fn spec(&self) -> &Lorenz96Spec {
        &self.spec
    }

    pub fn center(&self) -> &[S] {
        &self.center
    }

    /// Euler step `x ← x + T f(x) + √T u` with the given noise vector.
    pub fn step_with_noise(&self, x: &mut [S], noise: &[S], scratch: &mut [S]) {
        lorenz96_drift(x, self.forcing, scratch);
        for i in 0..x.len() {
            x[i] = x[i] + self.t_step * scratch[i] + self.sqrt_t * noise[i];
        }
    }

    fn run_inner(&self, x: &mut [S], steps: usize, rng: &mut StreamRng) {
        let d = x.len();
        let mut drift = vec![S::zero(); d];
        for _ in 0..steps {
            lorenz96_drift(x, self.forcing, &mut drift);
            for i in 0..d {
                x[i] = x[i] + self.t_step * drift[i] + self.sqrt_t * S::standard_normal(rng);
            }
        }
    }
}

/// Uniform `(0,1)^d` draw followed by `burn_in` stochastic inner steps.
pub fn lorenz96_initial_state<S: Real>(spec: &Lorenz96Spec, stream: &RngStream) -> Result<StateVector<S>> {
    spec.validate()?;
    let probe = Lorenz96::new(spec.clone(), vec![S::zero(); spec.d])?;
    let mut rng = stream.rng();
    let mut x: Vec<S> = (0..spec.d).map(|_| S::standard_uniform(&mut rng)).collect();
    probe.run_inner(&mut x, spec.burn_in, &mut rng);
    Ok(x)
}

/// Model with prior centred at a burn-in state drawn from `stream`.
pub fn build_lorenz96<S: Real>(spec: &Lorenz96Spec, stream: &RngStream) -> Result<Lorenz96<S>> {
    let center = lorenz96_initial_state(spec, stream)?;
    Lorenz96::new(spec.clone(), center)
}

impl<S: Real> StateSpaceModel<S> for Lorenz96<S> {
    fn state_dim(&self) -> usize {
        self.spec.d
    }

    fn obs_dim(&self) -> usize {
        self.spec.obs_dim()
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> StateVector<S> {
        let sd = S::of(self.spec.prior_var.sqrt());
        self.center.iter().map(|&c| c + sd * S::standard_normal(rng)).collect()
    }

    fn sample_transition(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> StateVector<S> {
        let mut s = x.to_vec();
        self.run_inner(&mut s, self.spec.t_s, rng);
        s
    }

    fn sample_observation(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> Vec<S> {
        let sd = self.obs_var.sqrt();
        (0..self.obs_dim())
            .map(|j| x[2 * j] + sd * S::standard_normal(rng))
            .collect()
    }

    fn log_likelihood(&self, y: &Observation<S>, x: &[S]) -> S {
        y.values.iter().enumerate().fold(S::zero(), |acc, (j, &yj)| {
            acc + normal_log_pdf(yj, x[2 * j], self.obs_var)
        })
    }

    fn log_likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        let mut g = vec![S::zero(); self.spec.d];
        for (j, &yj) in y.values.iter().enumerate() {
            g[2 * j] = (yj - x[2 * j]) / self.obs_var;
        }
        Some(g)
    }
}

impl<S: Real> ObservationOperator<S> for Lorenz96<S> {
    fn observe(&self, x: &[S], _t: usize) -> Vec<S> {
        (0..self.obs_dim()).map(|j| x[2 * j]).collect()
    }
    fn obs_noise_var(&self, _t: usize) -> Vec<S> {
        vec![self.obs_var; self.obs_dim()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_forcing_state_is_fixed() {
        let mut out = vec![1.0; 40];
        lorenz96_drift(&vec![8.0; 40], 8.0, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn index_wrap_at_first_coordinate() {
        let d = 6;
        let x: Vec<f64> = (0..d).map(|i| (i as f64 + 1.0).powi(2)).collect();
        let mut out = vec![0.0; d];
        lorenz96_drift(&x, 8.0, &mut out);
        // 1-based i = 1 reads x_2, x_{-1} = x_{d-1}, x_0 = x_d.
        let expect = (x[1] - x[d - 2]) * x[d - 1] - x[0] + 8.0;
        assert_eq!(out[0], expect);
        let expect_last = (x[0] - x[d - 3]) * x[d - 2] - x[d - 1] + 8.0;
        assert_eq!(out[d - 1], expect_last);
    }

    #[test]
    fn observes_odd_coordinates() {
        let m = Lorenz96::<f64>::new(Lorenz96Spec::default(), vec![0.0; 40]).unwrap();
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let h = m.observe(&x, 1);
        assert_eq!(h.len(), 20);
        assert_eq!(h[..3], [0.0, 2.0, 4.0]);
        let y = Observation::new(h, 1);
        let g = m.log_likelihood_gradient(&y, &x).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_dimension_rejected() {
        let spec = Lorenz96Spec {
            d: 3,
            ..Default::default()
        };
        assert!(lorenz96_initial_state::<f64>(&spec, &RngStream::new(1)).is_err());
    }

    #[test]
    fn burn_in_state_is_finite_and_reproducible() {
        let spec = Lorenz96Spec::default();
        let a: Vec<f64> = lorenz96_initial_state(&spec, &RngStream::new(9)).unwrap();
        let b: Vec<f64> = lorenz96_initial_state(&spec, &RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }
}
