//! State-space model abstraction and the weighted-ensemble machinery shared by
//! every particle filter.
//!
//! A model is a prior sampler, a Markov transition sampler and a likelihood
//! `g_t(x) = p(y_t | x_t)`. Weights are kept in the log domain; linear weights
//! only appear when resampling or estimating.

use crate::error::{Error, Result};
use crate::models::LinearGaussian;
use crate::rng::StreamRng;
use crate::scalar::Real;

/// A single state `x_t`.
pub type StateVector<S> = Vec<S>;

/// The observation `y_t`; `time` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<S> {
    pub values: Vec<S>,
    pub time: usize,
}

impl<S: Real> Observation<S> {
    pub fn new(values: Vec<S>, time: usize) -> Self {
        Self { values, time }
    }

    pub fn scalar(value: S, time: usize) -> Self {
        Self {
            values: vec![value],
            time,
        }
    }
}

/// A state-space model `x_0 ~ π_0`, `x_t | x_{t-1} ~ τ_t`, `y_t | x_t ~ g_t`.
///
/// Samplers are pure given the generator they are handed. Transition
/// densities are deliberately absent: most bundled models can only be
/// simulated.
pub trait StateSpaceModel<S: Real>: Send + Sync {
    fn state_dim(&self) -> usize;

    fn obs_dim(&self) -> usize;

    fn sample_prior(&self, rng: &mut StreamRng) -> StateVector<S>;

    /// Draw `x_t` given `x_{t-1}`; `t` is the index of the new state.
    fn sample_transition(&self, x: &[S], t: usize, rng: &mut StreamRng) -> StateVector<S>;

    /// Draw `y_t` given `x_t` (ground-truth generation).
    fn sample_observation(&self, x: &[S], t: usize, rng: &mut StreamRng) -> Vec<S>;

    /// `log g_t(x)`. Never NaN; `-inf` only on degenerate inputs.
    fn log_likelihood(&self, y: &Observation<S>, x: &[S]) -> S;

    /// Closed-form `∇_x log g_t(x)`, when the model provides one.
    fn log_likelihood_gradient(&self, _y: &Observation<S>, _x: &[S]) -> Option<Vec<S>> {
        None
    }

    /// Closed-form `∇_x g_t(x) = g_t(x) ∇_x log g_t(x)`.
    fn likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        let grad_log = self.log_likelihood_gradient(y, x)?;
        let g = self.log_likelihood(y, x).exp();
        Some(grad_log.into_iter().map(|d| d * g).collect())
    }

    /// Deterministic skeleton `E[x_t | x_{t-1}]`, used for auxiliary
    /// first-stage weights.
    fn transition_mean(&self, _x: &[S], _t: usize) -> Option<StateVector<S>> {
        None
    }

    /// Access to the linear-Gaussian structure, for filters that need the
    /// closed-form proposal or proposal density.
    fn linear_gaussian(&self) -> Option<&LinearGaussian<S>> {
        None
    }
}

impl<S: Real, M: StateSpaceModel<S> + ?Sized> StateSpaceModel<S> for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn sample_prior(&self, rng: &mut StreamRng) -> StateVector<S> {
        (**self).sample_prior(rng)
    }
    fn sample_transition(&self, x: &[S], t: usize, rng: &mut StreamRng) -> StateVector<S> {
        (**self).sample_transition(x, t, rng)
    }
    fn sample_observation(&self, x: &[S], t: usize, rng: &mut StreamRng) -> Vec<S> {
        (**self).sample_observation(x, t, rng)
    }
    fn log_likelihood(&self, y: &Observation<S>, x: &[S]) -> S {
        (**self).log_likelihood(y, x)
    }
    fn log_likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        (**self).log_likelihood_gradient(y, x)
    }
    fn likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        (**self).likelihood_gradient(y, x)
    }
    fn transition_mean(&self, x: &[S], t: usize) -> Option<StateVector<S>> {
        (**self).transition_mean(x, t)
    }
    fn linear_gaussian(&self) -> Option<&LinearGaussian<S>> {
        (**self).linear_gaussian()
    }
}

/// Normalize raw log-weights with max-subtraction.
///
/// Returns the normalized log-weights and `log Σ exp(raw)`.
pub fn normalize_log_weights<S: Real>(raw: &[S]) -> Result<(Vec<S>, S)> {
    if raw.is_empty() {
        return Err(Error::Empty("log-weights"));
    }
    let max = raw.iter().fold(S::neg_infinity(), |m, &w| if w > m { w } else { m });
    if max == S::neg_infinity() {
        return Err(Error::AllWeightsZero);
    }
    if max.is_nan() || max == S::infinity() {
        return Err(Error::InvalidParam(format!("log-weight maximum is {max}")));
    }
    let sum = raw.iter().fold(S::zero(), |acc, &w| acc + (w - max).exp());
    let log_norm = sum.ln();
    let normalized = raw.iter().map(|&w| w - max - log_norm).collect();
    Ok((normalized, max + log_norm))
}

/// `N` particles with log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<S> {
    pub states: Vec<StateVector<S>>,
    pub log_weights: Vec<S>,
    pub normalized: bool,
}

impl<S: Real> ParticleEnsemble<S> {
    /// Equally weighted ensemble (log-weights `-log N`).
    pub fn uniform(states: Vec<StateVector<S>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        let lw = -S::of(states.len() as f64).ln();
        Ok(Self {
            log_weights: vec![lw; states.len()],
            states,
            normalized: true,
        })
    }

    /// Ensemble with unnormalized log-weights.
    pub fn weighted(states: Vec<StateVector<S>>, log_weights: Vec<S>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        if states.len() != log_weights.len() {
            return Err(Error::DimensionMismatch {
                what: "ensemble weights",
                expected: states.len(),
                found: log_weights.len(),
            });
        }
        Ok(Self {
            states,
            log_weights,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Normalize in place, returning `log Σ exp(raw)`.
    pub fn normalize(&mut self) -> Result<S> {
        let (w, log_sum) = normalize_log_weights(&self.log_weights)?;
        self.log_weights = w;
        self.normalized = true;
        Ok(log_sum)
    }

    /// Linear normalized weights.
    pub fn weights(&self) -> Result<Vec<S>> {
        if !self.normalized {
            return Err(Error::NotNormalized);
        }
        Ok(self.log_weights.iter().map(|w| w.exp()).collect())
    }

    /// `Σ w_i x_i`.
    pub fn weighted_mean(&self) -> Result<Vec<S>> {
        let w = self.weights()?;
        let mut mean = vec![S::zero(); self.dim()];
        for (x, &wi) in self.states.iter().zip(&w) {
            for (m, &xi) in mean.iter_mut().zip(x) {
                *m = *m + wi * xi;
            }
        }
        Ok(mean)
    }

    pub fn effective_sample_size(&self) -> Result<S> {
        effective_sample_size(self)
    }
}

/// `1 / Σ w_i²` of a normalized ensemble.
pub fn effective_sample_size<S: Real>(ensemble: &ParticleEnsemble<S>) -> Result<S> {
    if !ensemble.normalized {
        return Err(Error::NotNormalized);
    }
    let s = ensemble
        .log_weights
        .iter()
        .fold(S::zero(), |acc, &lw| acc + (lw + lw).exp());
    Ok(S::one() / s)
}

/// Central finite differences of `g_t` (not `log g_t`) in every coordinate.
pub fn finite_difference_gradient<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    y: &Observation<S>,
    x: &[S],
    h: S,
) -> Vec<S> {
    central_differences(x, h, |p| model.log_likelihood(y, p).exp())
}

/// Central finite differences of `log g_t`.
pub fn finite_difference_log_gradient<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    y: &Observation<S>,
    x: &[S],
    h: S,
) -> Vec<S> {
    central_differences(x, h, |p| model.log_likelihood(y, p))
}

fn central_differences<S: Real>(x: &[S], h: S, f: impl Fn(&[S]) -> S) -> Vec<S> {
    let mut p = x.to_vec();
    let two_h = h + h;
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let fp = f(&p);
            p[i] = x[i] - h;
            let fm = f(&p);
            p[i] = x[i];
            (fp - fm) / two_h
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::normal_log_pdf;

    #[test]
    fn uniform_raw_weights() {
        let (w, ls) = normalize_log_weights(&[0.0_f64; 4]).unwrap();
        for lw in w {
            assert!((lw.exp() - 0.25).abs() < 1e-15);
        }
        assert!((ls - 4.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn three_to_one_weights() {
        let (w, ls) = normalize_log_weights(&[3.0_f64.ln(), 0.0]).unwrap();
        assert!((w[0].exp() - 0.75).abs() < 1e-15);
        assert!((w[1].exp() - 0.25).abs() < 1e-15);
        assert!((ls - 4.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn all_neg_infinity_is_degenerate() {
        let raw = [f64::NEG_INFINITY; 3];
        assert_eq!(normalize_log_weights(&raw), Err(Error::AllWeightsZero));
        let partly = [f64::NEG_INFINITY, 0.0];
        let (w, _) = normalize_log_weights(&partly).unwrap();
        assert_eq!(w[0], f64::NEG_INFINITY);
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn ess_examples() {
        let e = ParticleEnsemble::uniform(vec![vec![0.0_f64]; 100]).unwrap();
        assert!((effective_sample_size(&e).unwrap() - 100.0).abs() < 1e-9);

        let mut lw = vec![f64::NEG_INFINITY; 10];
        lw[3] = 0.0;
        let mut e = ParticleEnsemble::weighted(vec![vec![0.0]; 10], lw).unwrap();
        assert_eq!(effective_sample_size(&e), Err(Error::NotNormalized));
        e.normalize().unwrap();
        assert!((effective_sample_size(&e).unwrap() - 1.0).abs() < 1e-15);

        let mut e =
            ParticleEnsemble::weighted(vec![vec![0.0]; 3], vec![0.5_f64.ln(), 0.3_f64.ln(), 0.2_f64.ln()]).unwrap();
        e.normalize().unwrap();
        // 1 / (0.25 + 0.09 + 0.04)
        assert!((effective_sample_size(&e).unwrap() - 2.631_578_947_368_421).abs() < 1e-12);
    }

    struct ScalarGauss {
        constant: bool,
    }

    impl StateSpaceModel<f64> for ScalarGauss {
        fn state_dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn sample_prior(&self, _: &mut StreamRng) -> Vec<f64> {
            vec![0.0]
        }
        fn sample_transition(&self, x: &[f64], _: usize, _: &mut StreamRng) -> Vec<f64> {
            x.to_vec()
        }
        fn sample_observation(&self, x: &[f64], _: usize, _: &mut StreamRng) -> Vec<f64> {
            x.to_vec()
        }
        fn log_likelihood(&self, y: &Observation<f64>, x: &[f64]) -> f64 {
            if self.constant {
                0.3_f64.ln()
            } else {
                normal_log_pdf(y.values[0], x[0], 1.0)
            }
        }
    }

    #[test]
    fn finite_difference_examples() {
        let m = ScalarGauss { constant: false };
        let y = Observation::scalar(1.0, 1);
        let at_max = finite_difference_gradient(&m, &y, &[1.0], 1e-5);
        assert!(at_max[0].abs() < 1e-8);
        // g(0) (y - x) with g(0) = N(1; 0, 1)
        let g = finite_difference_gradient(&m, &y, &[0.0], 1e-5);
        let exact = (-0.5_f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((g[0] - exact).abs() < 1e-9);
        assert!((g[0] - 0.24197).abs() < 1e-5);

        let c = ScalarGauss { constant: true };
        assert_eq!(finite_difference_gradient(&c, &y, &[0.4], 1e-5), vec![0.0]);
    }

    #[test]
    fn weighted_mean_requires_normalization() {
        let e = ParticleEnsemble::weighted(vec![vec![1.0_f64], vec![3.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(e.weighted_mean(), Err(Error::NotNormalized));
        let mut e = e;
        e.normalize().unwrap();
        assert!((e.weighted_mean().unwrap()[0] - 2.0).abs() < 1e-15);
    }
}
