use serde::{Deserialize, Serialize};

use super::{InnerFilter, JitterKernel, ParamPrior, Parameterized, SvParams};
use crate::error::{Error, Result};
use crate::filters::{log_mean_exp, multinomial_indices, weigh, FilterState};
use crate::rng::{label, RngStream, StreamRng};
use crate::scalar::Real;
use crate::ssm::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpfConfig {
    /// Number of parameter particles.
    pub k: usize,
    pub jitter: JitterKernel,
}

impl Default for NpfConfig {
    fn default() -> Self {
        Self {
            k: 50,
            jitter: JitterKernel::default(),
        }
    }
}

/// `K` parameter particles, each carrying its own inner filter.
#[derive(Debug, Clone)]
pub struct NpfState<S, P> {
    pub thetas: Vec<P>,
    pub inner: Vec<FilterState<S>>,
    pub time: usize,
}

impl<S: Real, P: Parameterized<S> + Clone> NpfState<S, P> {
    /// Inner ensembles of size `n` drawn from each parameter's state prior.
    pub fn new(thetas: Vec<P>, n: usize, stream: &RngStream) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::Empty("parameter particles"));
        }
        let init = stream.child(label::INIT);
        let inner = thetas
            .iter()
            .enumerate()
            .map(|(i, th)| FilterState::initialize(&th.model()?, n, &init.child(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { thetas, inner, time: 0 })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

impl<S: Real> NpfState<S, SvParams> {
    /// `k` parameter draws from `prior`.
    pub fn from_prior(prior: &ParamPrior, k: usize, n: usize, stream: &RngStream) -> Result<Self> {
        let ps = stream.child(label::PROPOSAL);
        let thetas = (0..k)
            .map(|i| prior.sample(&mut ps.child(i as u64).rng()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(thetas, n, stream)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpfStepReport<S> {
    /// `log[(1/KN) Σ_i Σ_j g_t(x_t^{(i,j)})]`, with the likelihoods taken
    /// before any nudging.
    pub log_evidence_increment: S,
    /// State mean under the weighted two-layer approximation.
    pub state_mean: Vec<S>,
    pub degenerate: bool,
}

/// One step of the nested particle filter: jitter every parameter, advance
/// every inner filter by one observation, weight parameters by their inner
/// evidence increments and resample the parameter layer multinomially,
/// carrying the inner ensembles along.
pub fn npf_step<S, P, J>(
    state: &mut NpfState<S, P>,
    y: &Observation<S>,
    jitter: J,
    inner: &InnerFilter<S>,
    stream: &RngStream,
) -> Result<NpfStepReport<S>>
where
    S: Real,
    P: Parameterized<S> + Clone,
    J: Fn(&P, &mut StreamRng) -> P,
{
    let k = state.len();
    if k == 0 {
        return Err(Error::Empty("parameter particles"));
    }
    let step = stream.child(y.time as u64);
    let jit = step.child(label::JITTER);
    let inner_stream = step.child(label::INNER);
    let mut raw = Vec::with_capacity(k);
    let mut pre = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    for i in 0..k {
        let th = jitter(&state.thetas[i], &mut jit.child(i as u64).rng());
        let model = th.model()?;
        let r = inner
            .filter
            .step(&model, &mut state.inner[i], y, &inner_stream.child(i as u64))?;
        state.thetas[i] = th;
        raw.push(r.log_evidence_increment);
        pre.push(r.pre_nudge_log_evidence_increment);
        means.push(r.mean);
    }
    let w = weigh(&raw, y.time)?;
    let mut state_mean = vec![S::zero(); means[0].len()];
    for (m, &lw) in means.iter().zip(&w.log_weights) {
        let wi = lw.exp();
        for (a, &b) in state_mean.iter_mut().zip(m) {
            *a = *a + wi * b;
        }
    }
    if k > 1 {
        let idx = multinomial_indices(&w.log_weights, k, &mut step.child(label::RESAMPLE).rng());
        state.thetas = idx.iter().map(|&i| state.thetas[i].clone()).collect();
        state.inner = idx.iter().map(|&i| state.inner[i].clone()).collect();
    }
    state.time = y.time;
    Ok(NpfStepReport {
        log_evidence_increment: log_mean_exp(&pre),
        state_mean,
        degenerate: w.degenerate,
    })
}

/// `log p̂(y_{1:T})` from the per-step increments.
pub fn npf_evidence<S: Real>(increments: &[S]) -> S {
    increments.iter().copied().sum()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NpfOutput<S> {
    pub log_evidence_increments: Vec<S>,
    pub state_means: Vec<Vec<S>>,
    /// Mean of the (equally weighted) parameter particles after each step.
    pub param_means: Vec<SvParams>,
}

impl<S: Real> NpfOutput<S> {
    pub fn log_evidence(&self) -> S {
        npf_evidence(&self.log_evidence_increments)
    }
}

/// Nested particle filter on the stochastic volatility model with
/// parameters initialized from `prior`.
pub fn npf_run<S: Real>(
    observations: &[Observation<S>],
    prior: &ParamPrior,
    config: &NpfConfig,
    inner: &InnerFilter<S>,
    stream: &RngStream,
) -> Result<NpfOutput<S>> {
    config.jitter.validate()?;
    let mut state = NpfState::from_prior(prior, config.k, inner.n, stream)?;
    let mut out = NpfOutput::default();
    let jitter = |th: &SvParams, rng: &mut StreamRng| config.jitter.apply(th, rng);
    for y in observations {
        let r = npf_step(&mut state, y, jitter, inner, stream)?;
        out.log_evidence_increments.push(r.log_evidence_increment);
        out.state_means.push(r.state_mean);
        let kf = state.len() as f64;
        let sum = state.thetas.iter().fold([0.0; 3], |acc, th| {
            [acc[0] + th.mu, acc[1] + th.sigma_v, acc[2] + th.phi]
        });
        out.param_means.push(SvParams::from_array(sum.map(|v| v / kf)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::ParticleFilter;

    fn obs() -> Vec<Observation<f64>> {
        (1..=15)
            .map(|t| Observation::scalar((t as f64 * 1.3).cos() * 1.5, t))
            .collect()
    }

    #[test]
    fn single_parameter_particle_is_a_plain_filter() {
        let th = SvParams::new(-0.2, 0.15, 0.97);
        let inner = InnerFilter::new(ParticleFilter::Bootstrap, 40).unwrap();
        let s = RngStream::new(6);
        let mut state = NpfState::<f64, _>::new(vec![th], 40, &s).unwrap();
        let mut inc = Vec::new();
        let mut direct_state = state.inner[0].clone();
        let model = <SvParams as Parameterized<f64>>::model(&th).unwrap();
        for y in obs() {
            let r = npf_step(&mut state, &y, |t: &SvParams, _: &mut StreamRng| *t, &inner, &s).unwrap();
            let d = inner
                .filter
                .step(
                    &model,
                    &mut direct_state,
                    &y,
                    &s.child(y.time as u64).child(label::INNER).child(0),
                )
                .unwrap();
            assert_eq!(r.log_evidence_increment, d.log_evidence_increment);
            inc.push(r.log_evidence_increment);
        }
        assert_eq!(state.inner[0].ensemble.states, direct_state.ensemble.states);
        assert_eq!(state.thetas, vec![th]);
        assert!(npf_evidence(&inc).is_finite());
    }

    #[test]
    fn zero_jitter_never_moves_parameters() {
        let prior = ParamPrior::default();
        let s = RngStream::new(10);
        let mut state = NpfState::<f64, _>::from_prior(&prior, 8, 10, &s).unwrap();
        let initial = state.thetas.clone();
        let inner = InnerFilter::new(ParticleFilter::Bootstrap, 10).unwrap();
        for y in obs() {
            npf_step(
                &mut state,
                &y,
                |t: &SvParams, r: &mut StreamRng| JitterKernel::ZERO.apply(t, r),
                &inner,
                &s,
            )
            .unwrap();
        }
        assert!(state.thetas.iter().all(|t| initial.contains(t)));
    }

    #[test]
    fn constant_likelihood_gives_t_log_c() {
        // One particle, one observation: the increment is log g(x_1).
        let th = SvParams::new(0.0, 0.1, 0.5);
        let inner = InnerFilter::new(ParticleFilter::Bootstrap, 1).unwrap();
        let s = RngStream::new(2);
        let mut state = NpfState::<f64, _>::new(vec![th], 1, &s).unwrap();
        let y = Observation::scalar(0.4, 1);
        let r = npf_step(&mut state, &y, |t: &SvParams, _: &mut StreamRng| *t, &inner, &s).unwrap();
        let model = <SvParams as Parameterized<f64>>::model(&th).unwrap();
        use crate::ssm::StateSpaceModel;
        let x1 = &state.inner[0].ensemble.states[0];
        assert!((r.log_evidence_increment - model.log_likelihood(&y, x1)).abs() < 1e-12);
    }

    #[test]
    fn run_keeps_parameters_in_support() {
        let out = npf_run(
            &obs(),
            &ParamPrior::default(),
            &NpfConfig {
                k: 10,
                jitter: JitterKernel {
                    var_mu: 0.1,
                    var_sigma_v: 0.1,
                    var_phi: 0.1,
                },
            },
            &InnerFilter::new(ParticleFilter::Bootstrap, 10).unwrap(),
            &RngStream::new(3),
        )
        .unwrap();
        assert!(out.param_means.iter().all(|p| p.in_support()));
        assert!(out.log_evidence().is_finite());
    }
}
