use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InnerFilter, ParamPrior, Parameterized, SvParams};
use crate::error::{Error, Result};
use crate::filters::run_particle_filter;
use crate::rng::{label, RngStream};
use crate::scalar::Real;
use crate::ssm::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmhConfig {
    pub iterations: usize,
    /// Random-walk variances for `(μ, σ_v, φ)`.
    pub proposal_var: [f64; 3],
    pub initial: SvParams,
}

impl Default for PmhConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            proposal_var: [1e-2, 1e-3, 1e-3],
            initial: SvParams::new(0.0, 0.2, 0.95),
        }
    }
}

impl PmhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParam("pMH needs at least one iteration".into()));
        }
        if self.proposal_var.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParam(format!(
                "proposal variances {:?}",
                self.proposal_var
            )));
        }
        Ok(())
    }
}

/// Output of a pMH run. Entry `k` is the chain state after iteration `k + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PmhChain {
    pub samples: Vec<SvParams>,
    pub log_marginals: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Proposals whose likelihood estimate failed or was zero.
    pub failed_proposals: usize,
}

impl PmhChain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `log` of the Metropolis–Hastings ratio for a symmetric proposal.
pub fn log_acceptance_ratio(
    prior: &ParamPrior,
    current: &SvParams,
    current_log_lik: f64,
    proposed: &SvParams,
    proposed_log_lik: f64,
) -> f64 {
    let lp = prior.log_density(proposed);
    if lp == f64::NEG_INFINITY || proposed_log_lik == f64::NEG_INFINITY || proposed_log_lik.is_nan() {
        return f64::NEG_INFINITY;
    }
    (lp + proposed_log_lik) - (prior.log_density(current) + current_log_lik)
}

/// Pseudo-marginal Metropolis–Hastings with a joint Gaussian random walk.
///
/// `log_lik(θ, stream)` estimates `log p(y_{1:T} | θ)`; it is called once per
/// proposal with a fresh substream, and the estimate of the current state is
/// kept until a proposal is accepted. Proposals outside the prior support are
/// rejected without calling the estimator.
pub fn pmh_run_with<F>(mut log_lik: F, prior: &ParamPrior, config: &PmhConfig, stream: &RngStream) -> Result<PmhChain>
where
    F: FnMut(&SvParams, &RngStream) -> Result<f64>,
{
    config.validate()?;
    prior.validate()?;
    let mut current = config.initial;
    if !prior.log_density(&current).is_finite() {
        return Err(Error::InvalidParam(format!(
            "initial θ {current:?} has zero prior density"
        )));
    }
    let mut current_ll = log_lik(&current, &stream.child(0).child(label::INNER))?;
    if !current_ll.is_finite() {
        return Err(Error::InvalidParam(
            "log-likelihood estimate at the initial θ is not finite".into(),
        ));
    }
    let sd = config.proposal_var.map(f64::sqrt);
    let mut chain = PmhChain {
        samples: Vec::with_capacity(config.iterations),
        log_marginals: Vec::with_capacity(config.iterations),
        accepted: Vec::with_capacity(config.iterations),
        failed_proposals: 0,
    };
    for k in 1..=config.iterations as u64 {
        let step = stream.child(k);
        let mut prng = step.child(label::PROPOSAL).rng();
        let c = current.as_array();
        let proposed = SvParams::from_array([0, 1, 2].map(|j| c[j] + sd[j] * f64::standard_normal(&mut prng)));
        let mut accept = false;
        let mut proposed_ll = f64::NEG_INFINITY;
        if prior.log_density(&proposed).is_finite() {
            proposed_ll = match log_lik(&proposed, &step.child(label::INNER)) {
                Ok(v) if v.is_finite() => v,
                Ok(v) => {
                    log::warn!("pMH iteration {k}: likelihood estimate {v} at {proposed:?}; proposal rejected");
                    chain.failed_proposals += 1;
                    f64::NEG_INFINITY
                }
                Err(e) => {
                    log::warn!("pMH iteration {k}: inner filter failed at {proposed:?} ({e}); proposal rejected");
                    chain.failed_proposals += 1;
                    f64::NEG_INFINITY
                }
            };
            let log_a = log_acceptance_ratio(prior, &current, current_ll, &proposed, proposed_ll);
            accept = log_a >= 0.0 || step.child(label::ACCEPT).rng().random::<f64>().ln() < log_a;
        }
        if accept {
            current = proposed;
            current_ll = proposed_ll;
        }
        chain.samples.push(current);
        chain.log_marginals.push(current_ll);
        chain.accepted.push(accept);
    }
    Ok(chain)
}

/// pMH on the stochastic volatility model, estimating each likelihood with a
/// fresh run of `inner`. With a nudged inner filter the estimate is the one
/// selected by its evidence timing.
pub fn pmh_run<S: Real>(
    observations: &[Observation<S>],
    prior: &ParamPrior,
    config: &PmhConfig,
    inner: &InnerFilter<S>,
    stream: &RngStream,
) -> Result<PmhChain> {
    if observations.is_empty() {
        return Err(Error::Empty("observations"));
    }
    pmh_run_with(
        |theta, s| {
            let model = <SvParams as Parameterized<S>>::model(theta)?;
            let out = run_particle_filter(&inner.filter, &model, observations, inner.n, s)?;
            Ok(out.log_evidence().as_f64())
        },
        prior,
        config,
        stream,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::ParticleFilter;

    #[test]
    fn identical_proposal_and_stream_give_unit_ratio() {
        let prior = ParamPrior::default();
        let th = SvParams::new(-0.2, 0.15, 0.97);
        let y: Vec<Observation<f64>> = (1..=20)
            .map(|t| Observation::scalar((t as f64 * 0.7).sin(), t))
            .collect();
        let inner = InnerFilter::new(ParticleFilter::Bootstrap, 50).unwrap();
        let model = <SvParams as Parameterized<f64>>::model(&th).unwrap();
        let s = RngStream::new(4);
        let a = run_particle_filter(&inner.filter, &model, &y, inner.n, &s)
            .unwrap()
            .log_evidence();
        let b = run_particle_filter(&inner.filter, &model, &y, inner.n, &s)
            .unwrap()
            .log_evidence();
        assert_eq!(log_acceptance_ratio(&prior, &th, a, &th, b), 0.0);
    }

    #[test]
    fn out_of_support_proposals_are_rejected_without_evaluation() {
        let prior = ParamPrior::default();
        let config = PmhConfig {
            iterations: 200,
            proposal_var: [0.0, 0.0, 1.0],
            initial: SvParams::new(0.0, 0.2, 0.95),
        };
        let mut calls = 0;
        let chain = pmh_run_with(
            |th, _| {
                calls += 1;
                assert!(th.phi >= 0.0 && th.phi <= 1.0);
                Ok(0.0)
            },
            &prior,
            &config,
            &RngStream::new(1),
        )
        .unwrap();
        assert!(calls < 201);
        assert!(chain.samples.iter().all(|s| s.in_support()));
        assert_eq!(chain.len(), 200);
    }

    #[test]
    fn flat_likelihood_samples_the_prior_mean_of_mu() {
        let prior = ParamPrior::default();
        let config = PmhConfig {
            iterations: 40_000,
            proposal_var: [1.0, 1e-3, 1e-4],
            initial: SvParams::new(0.0, 0.2, 0.98),
        };
        let chain = pmh_run_with(|_, _| Ok(0.0), &prior, &config, &RngStream::new(8)).unwrap();
        let mu: f64 = chain.samples.iter().map(|s| s.mu).sum::<f64>() / chain.len() as f64;
        let sv: f64 = chain.samples.iter().map(|s| s.sigma_v).sum::<f64>() / chain.len() as f64;
        assert!(mu.abs() < 0.1, "{mu}");
        // Gamma(2, 0.1) has mean 0.2.
        assert!((sv - 0.2).abs() < 0.03, "{sv}");
    }

    #[test]
    fn failing_estimator_counts_as_rejection() {
        let chain = pmh_run_with(
            |th, _| {
                if th.mu > 0.0 {
                    Err(Error::AllWeightsZero)
                } else {
                    Ok(0.0)
                }
            },
            &ParamPrior::default(),
            &PmhConfig {
                iterations: 100,
                initial: SvParams::new(-0.5, 0.2, 0.95),
                ..Default::default()
            },
            &RngStream::new(2),
        )
        .unwrap();
        assert!(chain.samples.iter().all(|s| s.mu <= 0.0));
    }
}
