//! Parameter inference for the stochastic volatility model: particle
//! Metropolis–Hastings, the nested particle filter and chain diagnostics.
//!
//! Both drivers take an [`InnerFilter`], so the same code runs with
//! bootstrap or nudged filters inside.

mod diagnostics;
mod npf;
mod pmh;

pub use diagnostics::{acceptance_rate, acf, autocorrelation, SvParam};
pub use npf::{npf_evidence, npf_run, npf_step, NpfConfig, NpfOutput, NpfState, NpfStepReport};
pub use pmh::{log_acceptance_ratio, pmh_run, pmh_run_with, PmhChain, PmhConfig};

use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaPdf, Continuous, Gamma as GammaPdf, Normal as NormalPdf};

use crate::error::{Error, Result};
use crate::filters::ParticleFilter;
use crate::models::{build_stochvol, StochVol, StochVolSpec};
use crate::rng::StreamRng;
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel};

/// `θ = (μ, σ_v, φ)` of the stochastic volatility model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvParams {
    pub mu: f64,
    pub sigma_v: f64,
    pub phi: f64,
}

impl SvParams {
    pub fn new(mu: f64, sigma_v: f64, phi: f64) -> Self {
        Self { mu, sigma_v, phi }
    }

    /// `σ_v > 0` and `φ ∈ [−1, 1]`.
    pub fn in_support(&self) -> bool {
        self.mu.is_finite() && self.sigma_v > 0.0 && self.sigma_v.is_finite() && (-1.0..=1.0).contains(&self.phi)
    }

    pub fn spec(&self) -> StochVolSpec {
        StochVolSpec {
            mu: self.mu,
            sigma_v: self.sigma_v,
            phi: self.phi,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mu, self.sigma_v, self.phi]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<StochVolSpec> for SvParams {
    fn from(s: StochVolSpec) -> Self {
        Self::new(s.mu, s.sigma_v, s.phi)
    }
}

/// A parameter value that determines a state-space model.
pub trait Parameterized<S: Real> {
    type Model: StateSpaceModel<S>;
    fn model(&self) -> Result<Self::Model>;
}

impl<S: Real> Parameterized<S> for SvParams {
    type Model = StochVol<S>;

    fn model(&self) -> Result<StochVol<S>> {
        build_stochvol(&self.spec())
    }
}

/// Independent priors `μ ~ N(m, v)`, `σ_v ~ Gamma(shape, scale)`,
/// `φ ~ Beta(a, b)` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamPrior {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub sigma_shape: f64,
    pub sigma_scale: f64,
    pub phi_a: f64,
    pub phi_b: f64,
}

impl Default for ParamPrior {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 1.0,
            sigma_shape: 2.0,
            sigma_scale: 0.1,
            phi_a: 120.0,
            phi_b: 2.0,
        }
    }
}

impl ParamPrior {
    fn densities(&self) -> Result<(NormalPdf, GammaPdf, BetaPdf)> {
        let bad = |e: &dyn std::fmt::Display| Error::InvalidParam(format!("prior: {e}"));
        Ok((
            NormalPdf::new(self.mu_mean, self.mu_var.sqrt()).map_err(|e| bad(&e))?,
            GammaPdf::new(self.sigma_shape, 1.0 / self.sigma_scale).map_err(|e| bad(&e))?,
            BetaPdf::new(self.phi_a, self.phi_b).map_err(|e| bad(&e))?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.densities().map(|_| ())
    }

    /// Joint log-density; `-inf` outside the support.
    pub fn log_density(&self, theta: &SvParams) -> f64 {
        if !theta.in_support() || theta.phi < 0.0 {
            return f64::NEG_INFINITY;
        }
        let Ok((n, g, b)) = self.densities() else {
            return f64::NEG_INFINITY;
        };
        n.ln_pdf(theta.mu) + g.ln_pdf(theta.sigma_v) + b.ln_pdf(theta.phi)
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<SvParams> {
        self.validate()?;
        let mu = self.mu_mean + self.mu_var.sqrt() * f64::standard_normal(rng);
        let sigma_v = Gamma::new(self.sigma_shape, self.sigma_scale)
            .map_err(|e| Error::InvalidParam(e.to_string()))?
            .sample(rng);
        let phi = Beta::new(self.phi_a, self.phi_b)
            .map_err(|e| Error::InvalidParam(e.to_string()))?
            .sample(rng);
        // Keep φ strictly inside (−1, 1) so the model is stationary.
        Ok(SvParams::new(mu, sigma_v, phi.min(1.0 - 1e-12)))
    }
}

/// Independent Gaussian jitter of each parameter, truncated to the
/// support by rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterKernel {
    pub var_mu: f64,
    pub var_sigma_v: f64,
    pub var_phi: f64,
}

impl Default for JitterKernel {
    fn default() -> Self {
        Self {
            var_mu: 1e-3,
            var_sigma_v: 1e-4,
            var_phi: 1e-4,
        }
    }
}

impl JitterKernel {
    pub const ZERO: Self = Self {
        var_mu: 0.0,
        var_sigma_v: 0.0,
        var_phi: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for v in [self.var_mu, self.var_sigma_v, self.var_phi] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("jitter variance {v}")));
            }
        }
        Ok(())
    }

    /// Jitter `theta`, which must lie in the support. `σ_v` stays in
    /// `(0, ∞)` and `φ` in `(−1, 1)`.
    pub fn apply(&self, theta: &SvParams, rng: &mut StreamRng) -> SvParams {
        let mu = theta.mu + self.var_mu.sqrt() * f64::standard_normal(rng);
        let sigma_v = truncated_normal(theta.sigma_v, self.var_sigma_v, |s| s > 0.0, rng);
        let phi = truncated_normal(theta.phi, self.var_phi, |p| p.abs() < 1.0, rng);
        SvParams::new(mu, sigma_v, phi)
    }
}

/// `N(mean, var)` conditioned on `accept`, by rejection. The mean is in the
/// accepted set, so each try succeeds with probability at least one half.
fn truncated_normal(mean: f64, var: f64, accept: impl Fn(f64) -> bool, rng: &mut StreamRng) -> f64 {
    if var == 0.0 {
        return mean;
    }
    let sd = var.sqrt();
    loop {
        let v = mean + sd * f64::standard_normal(rng);
        if accept(v) {
            return v;
        }
    }
}

/// Inner filter of the inference drivers: an algorithm plus its ensemble size.
#[derive(Debug, Clone)]
pub struct InnerFilter<S> {
    pub filter: ParticleFilter<S>,
    pub n: usize,
}

impl<S: Real> InnerFilter<S> {
    pub fn new(filter: ParticleFilter<S>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("inner filter ensemble"));
        }
        Ok(Self { filter, n })
    }
}

/// Scaled log returns `y_t = 100 log(s_t / s_{t-1})`.
pub fn log_return_preprocess<S: Real>(prices: &[f64]) -> Result<Vec<Observation<S>>> {
    if prices.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least two prices, got {}",
            prices.len()
        )));
    }
    if let Some((index, &value)) = prices.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p.is_finite())) {
        return Err(Error::NonPositivePrice { index, value });
    }
    Ok(prices
        .windows(2)
        .enumerate()
        .map(|(t, w)| Observation::scalar(S::of(100.0 * (w[1] / w[0]).ln()), t + 1))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn log_returns() {
        let y = log_return_preprocess::<f64>(&[2.0, 2.0, 2.0]).unwrap();
        assert!(y.iter().all(|o| o.values[0] == 0.0));
        let y = log_return_preprocess::<f64>(&[1.0, 0.01f64.exp()]).unwrap();
        assert!((y[0].values[0] - 1.0).abs() < 1e-12);
        assert_eq!(y[0].time, 1);
        assert!(log_return_preprocess::<f64>(&[1.0]).is_err());
        assert_eq!(
            log_return_preprocess::<f64>(&[1.0, 0.0]).unwrap_err(),
            Error::NonPositivePrice { index: 1, value: 0.0 }
        );
    }

    #[test]
    fn prior_support() {
        let p = ParamPrior::default();
        assert_eq!(p.log_density(&SvParams::new(0.0, 0.1, 1.2)), f64::NEG_INFINITY);
        assert_eq!(p.log_density(&SvParams::new(0.0, -0.1, 0.9)), f64::NEG_INFINITY);
        assert_eq!(p.log_density(&SvParams::new(0.0, 0.1, -0.5)), f64::NEG_INFINITY);
        assert!(p.log_density(&SvParams::new(0.0, 0.1, 0.97)).is_finite());
    }

    #[test]
    fn prior_log_density_by_hand() {
        let p = ParamPrior::default();
        let (mu, s, phi) = (0.3_f64, 0.2_f64, 0.95_f64);
        let ln_n = -0.5 * (std::f64::consts::TAU.ln() + mu * mu);
        // Gamma(2, scale 0.1): s e^{-s/0.1} / 0.01.
        let ln_g = s.ln() - s / 0.1 - 0.01_f64.ln();
        // Beta(120, 2): φ^119 (1 − φ) / B(120, 2), B(120, 2) = 1 / (120 · 121).
        let ln_b = 119.0 * phi.ln() + (1.0 - phi).ln() + (120.0_f64 * 121.0).ln();
        let got = p.log_density(&SvParams::new(mu, s, phi));
        assert!((got - (ln_n + ln_g + ln_b)).abs() < 1e-9, "{got}");
    }

    #[test]
    fn prior_draws_are_in_support() {
        let p = ParamPrior::default();
        let s = RngStream::new(3);
        for i in 0..1000 {
            let th = p.sample(&mut s.child(i).rng()).unwrap();
            assert!(th.in_support() && th.phi.abs() < 1.0);
            assert!(p.log_density(&th).is_finite());
        }
    }

    #[test]
    fn zero_jitter_is_identity() {
        let th = SvParams::new(0.1, 0.2, 0.9);
        assert_eq!(JitterKernel::ZERO.apply(&th, &mut RngStream::new(1).rng()), th);
    }

    #[test]
    fn jitter_near_boundary_stays_inside() {
        let k = JitterKernel {
            var_mu: 1e-3,
            var_sigma_v: 1.0,
            var_phi: 1.0,
        };
        let th = SvParams::new(0.0, 1e-6, 0.999_999);
        let mut rng = RngStream::new(9).rng();
        for _ in 0..10_000 {
            let j = k.apply(&th, &mut rng);
            assert!(j.sigma_v > 0.0 && j.phi.abs() < 1.0);
        }
    }
}
