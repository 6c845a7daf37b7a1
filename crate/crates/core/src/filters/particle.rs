use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    implicit_kernel_sample, log_mean_exp, multinomial_from_weights, multinomial_indices, weigh, FilterState, StepReport,
};
use crate::error::{Error, Result};
use crate::linalg::{mvn_log_pdf, Matrix};
use crate::nudging::{select_indices, NudgeOperator, NudgeSelector};
use crate::rng::{label, RngStream};
use crate::scalar::Real;
use crate::ssm::{Observation, ParticleEnsemble, StateSpaceModel, StateVector};

/// Which likelihoods enter the evidence estimate of a nudged filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceTiming {
    /// Likelihoods of the nudged particles.
    #[default]
    PostNudge,
    /// Likelihoods of the particles as drawn from the transition.
    PreNudge,
}

/// The particle filters, all sharing [`ParticleFilter::step`].
#[derive(Debug, Clone)]
pub enum ParticleFilter<S> {
    /// Propagate, weight by `g_t`, resample.
    Bootstrap,
    /// Bootstrap filter with the selected particles nudged before weighting;
    /// weights stay `g_t` with no proposal correction.
    Nudged {
        selector: NudgeSelector,
        operator: NudgeOperator<S>,
        evidence: EvidenceTiming,
    },
    /// Linear-Gaussian models only: each particle is nudged by a log-gradient
    /// step with probability `epsilon` (default `1/√N`) and weighted by
    /// `g τ / q` against the resulting two-component mixture proposal.
    ProperlyWeighted { gamma: S, epsilon: Option<S> },
    /// Linear-Gaussian models only: sample `p(x_t | x_{t-1}, y_t)`, weight by
    /// `p(y_t | x_{t-1})`.
    OptimalProposal,
    /// Auxiliary filter with first-stage weights `g_t` at the transition mean.
    Auxiliary,
    /// Bootstrap filter for the observation-driven kernel: each particle is
    /// nudged independently with probability `epsilon`.
    Implicit { epsilon: S, operator: NudgeOperator<S> },
}

impl<S: Real> ParticleFilter<S> {
    pub fn nudged(selector: NudgeSelector, operator: NudgeOperator<S>) -> Self {
        Self::Nudged {
            selector,
            operator,
            evidence: EvidenceTiming::PostNudge,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Bootstrap => "bpf",
            Self::Nudged { .. } => "nupf",
            Self::ProperlyWeighted { .. } => "nupf-pw",
            Self::OptimalProposal => "optimal-pf",
            Self::Auxiliary => "apf",
            Self::Implicit { .. } => "implicit-bpf",
        }
    }

    /// Advance `state` by one observation.
    ///
    /// Randomness is drawn from `stream.child(t)` split by stage and by
    /// particle, so filters sharing a stage consume identical draws there.
    pub fn step<M: StateSpaceModel<S> + ?Sized>(
        &self,
        model: &M,
        state: &mut FilterState<S>,
        y: &Observation<S>,
        stream: &RngStream,
    ) -> Result<StepReport<S>> {
        let t = y.time;
        let step = stream.child(t as u64);
        match self {
            Self::Bootstrap => {
                let particles = propagate(model, &state.ensemble.states, t, &step);
                let raw = log_likelihoods(model, y, &particles);
                finish(state, particles, &raw, 0, &step, t)
            }
            Self::Nudged {
                selector,
                operator,
                evidence,
            } => {
                let mut particles = propagate(model, &state.ensemble.states, t, &step);
                let n = particles.len();
                let chosen = select_indices(selector, n, &mut step.child(label::SELECT).rng())?;
                let pre = log_likelihoods(model, y, &particles);
                let mut raw = pre.clone();
                let nudge = step.child(label::NUDGE);
                for &i in &chosen {
                    let prev = &state.ensemble.states[i];
                    let moved = operator.apply(model, y, &particles[i], prev, &mut nudge.child(i as u64).rng())?;
                    raw[i] = model.log_likelihood(y, &moved);
                    particles[i] = moved;
                }
                let w = weigh(&raw, t)?;
                let pre_increment = log_mean_exp(&pre);
                let used = match evidence {
                    EvidenceTiming::PostNudge => w.increment,
                    EvidenceTiming::PreNudge => pre_increment,
                };
                finish_weighted(
                    state,
                    particles,
                    w.log_weights,
                    used,
                    pre_increment,
                    w.degenerate,
                    chosen.len(),
                    &step,
                    t,
                )
            }
            Self::ProperlyWeighted { gamma, epsilon } => {
                let lg = model.linear_gaussian().ok_or(Error::UnsupportedModel(
                    "properly weighted nudging needs a linear-Gaussian model",
                ))?;
                properly_weighted(lg, model, state, y, *gamma, *epsilon, &step)
            }
            Self::OptimalProposal => {
                let lg = model.linear_gaussian().ok_or(Error::UnsupportedModel(
                    "the optimal proposal needs a linear-Gaussian model",
                ))?;
                optimal(lg, model, state, y, &step)
            }
            Self::Auxiliary => auxiliary(model, state, y, &step),
            Self::Implicit { epsilon, operator } => {
                let prev = &state.ensemble.states;
                let prop = step.child(label::PROPAGATE);
                let mut nudged = 0;
                let mut particles = Vec::with_capacity(prev.len());
                for (i, x) in prev.iter().enumerate() {
                    let (p, moved) =
                        implicit_kernel_sample(x, model, y, *epsilon, operator, &mut prop.child(i as u64).rng())?;
                    nudged += usize::from(moved);
                    particles.push(p);
                }
                let raw = log_likelihoods(model, y, &particles);
                finish(state, particles, &raw, nudged, &step, t)
            }
        }
    }
}

fn propagate<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    prev: &[StateVector<S>],
    t: usize,
    step: &RngStream,
) -> Vec<StateVector<S>> {
    let prop = step.child(label::PROPAGATE);
    prev.iter()
        .enumerate()
        .map(|(i, x)| model.sample_transition(x, t, &mut prop.child(i as u64).rng()))
        .collect()
}

fn log_likelihoods<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    y: &Observation<S>,
    particles: &[StateVector<S>],
) -> Vec<S> {
    particles.iter().map(|x| model.log_likelihood(y, x)).collect()
}

/// Normalize `raw`, estimate, resample and update `state`.
fn finish<S: Real>(
    state: &mut FilterState<S>,
    particles: Vec<StateVector<S>>,
    raw: &[S],
    nudged: usize,
    step: &RngStream,
    t: usize,
) -> Result<StepReport<S>> {
    let w = weigh(raw, t)?;
    finish_weighted(
        state,
        particles,
        w.log_weights,
        w.increment,
        w.increment,
        w.degenerate,
        nudged,
        step,
        t,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish_weighted<S: Real>(
    state: &mut FilterState<S>,
    particles: Vec<StateVector<S>>,
    log_weights: Vec<S>,
    increment: S,
    pre_increment: S,
    degenerate: bool,
    nudged: usize,
    step: &RngStream,
    t: usize,
) -> Result<StepReport<S>> {
    let n = particles.len();
    let w: Vec<S> = log_weights.iter().map(|lw| lw.exp()).collect();
    let mut mean = vec![S::zero(); particles.first().map_or(0, Vec::len)];
    for (x, &wi) in particles.iter().zip(&w) {
        for (m, &xi) in mean.iter_mut().zip(x) {
            *m = *m + wi * xi;
        }
    }
    let ess = S::one() / w.iter().fold(S::zero(), |acc, &wi| acc + wi * wi);
    let wf: Vec<f64> = w.iter().map(|wi| wi.as_f64()).collect();
    let idx = multinomial_from_weights(&wf, n, &mut step.child(label::RESAMPLE).rng());
    // Overwrite the previous generation in place to reuse its allocations.
    let mut states = std::mem::take(&mut state.ensemble.states);
    states.resize_with(n, Vec::new);
    for (slot, &i) in states.iter_mut().zip(&idx) {
        slot.clone_from(&particles[i]);
    }
    state.ensemble = ParticleEnsemble::uniform(states)?;
    state.time = t;
    state.cumulative_log_evidence = state.cumulative_log_evidence + increment;
    state.last_nudge_count = nudged;
    Ok(StepReport {
        mean,
        log_evidence_increment: increment,
        pre_nudge_log_evidence_increment: pre_increment,
        ess,
        nudged,
        degenerate,
    })
}

fn properly_weighted<S: Real, M: StateSpaceModel<S> + ?Sized>(
    lg: &crate::models::LinearGaussian<S>,
    model: &M,
    state: &mut FilterState<S>,
    y: &Observation<S>,
    gamma: S,
    epsilon: Option<S>,
    step: &RngStream,
) -> Result<StepReport<S>> {
    let t = y.time;
    let n = state.len();
    let eps = epsilon.unwrap_or_else(|| S::one() / S::of(n as f64).sqrt());
    if !(eps >= S::zero() && eps <= S::one()) {
        return Err(Error::InvalidParam(format!("mixture probability {eps} outside [0, 1]")));
    }
    let q_chol = lg.q_chol();
    if !q_chol.is_full_rank() {
        return Err(Error::UnsupportedModel(
            "properly weighted nudging needs a positive-definite Q",
        ));
    }
    let d = lg.d_x();
    let c = lg.c_at(t);
    // Log-gradient step x + γ Cᵀ R⁻¹ (y − C x) = A x + b.
    let rinv_c = Matrix::from_vec(
        c.rows(),
        c.cols(),
        (0..c.rows() * c.cols())
            .map(|k| c.as_slice()[k] / lg.r_diag()[k / c.cols()])
            .collect(),
    )?;
    let ctrc = c.transpose().matmul(&rinv_c);
    let a = Matrix::identity(d).sub(&ctrc.scale(gamma));
    let rinv_y: Vec<S> = y.values.iter().zip(lg.r_diag()).map(|(&v, &r)| v / r).collect();
    let b: Vec<S> = c.tr_mul_vec(&rinv_y).into_iter().map(|v| gamma * v).collect();
    let nudged_cov = a.matmul(lg.q()).matmul(&a.transpose()).symmetrize();
    let nudged_chol = nudged_cov.cholesky()?;
    let (ln_keep, ln_eps) = ((S::one() - eps).ln(), eps.ln());

    let prop = step.child(label::PROPAGATE);
    let mix = step.child(label::MIXTURE);
    let mut particles = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let mut nudged = 0;
    for (i, xp) in state.ensemble.states.iter().enumerate() {
        let mut x = model.sample_transition(xp, t, &mut prop.child(i as u64).rng());
        pre.push(model.log_likelihood(y, &x));
        if mix.child(i as u64).rng().random::<f64>() < eps.as_f64() {
            x = a.mul_vec(&x).into_iter().zip(&b).map(|(u, &v)| u + v).collect();
            nudged += 1;
        }
        let log_tau = mvn_log_pdf(&x, xp, q_chol);
        let nudged_mean: Vec<S> = a.mul_vec(xp).into_iter().zip(&b).map(|(u, &v)| u + v).collect();
        let log_bar = mvn_log_pdf(&x, &nudged_mean, &nudged_chol);
        let log_q = log_add_exp(ln_keep + log_tau, ln_eps + log_bar);
        raw.push(model.log_likelihood(y, &x) + log_tau - log_q);
        particles.push(x);
    }
    let w = weigh(&raw, t)?;
    let pre_increment = log_mean_exp(&pre);
    finish_weighted(
        state,
        particles,
        w.log_weights,
        w.increment,
        pre_increment,
        w.degenerate,
        nudged,
        step,
        t,
    )
}

fn log_add_exp<S: Real>(a: S, b: S) -> S {
    let m = a.max(b);
    if m == S::neg_infinity() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn optimal<S: Real, M: StateSpaceModel<S> + ?Sized>(
    lg: &crate::models::LinearGaussian<S>,
    model: &M,
    state: &mut FilterState<S>,
    y: &Observation<S>,
    step: &RngStream,
) -> Result<StepReport<S>> {
    let _ = model;
    let t = y.time;
    let c = lg.c_at(t);
    let q = lg.q();
    let cq = c.matmul(q);
    let innov = cq
        .matmul(&c.transpose())
        .add(&Matrix::from_diag(lg.r_diag()))
        .symmetrize();
    let innov_chol = innov.cholesky().map_err(|_| Error::SingularInnovation)?;
    // K = Q Cᵀ S⁻¹ = (S⁻¹ C Q)ᵀ since Q and S are symmetric.
    let gain = innov_chol.solve_matrix(&cq).transpose();
    let cov = q.sub(&gain.matmul(&cq)).symmetrize();
    let cov_chol = cov.cholesky_psd()?;

    let prop = step.child(label::PROPAGATE);
    let d = lg.d_x();
    let mut particles = Vec::with_capacity(state.len());
    let mut raw = Vec::with_capacity(state.len());
    for (i, xp) in state.ensemble.states.iter().enumerate() {
        let pred = c.mul_vec(xp);
        raw.push(mvn_log_pdf(&y.values, &pred, &innov_chol));
        let resid: Vec<S> = y.values.iter().zip(&pred).map(|(&a, &b)| a - b).collect();
        let shift = gain.mul_vec(&resid);
        let mut rng = prop.child(i as u64).rng();
        let z: Vec<S> = (0..d).map(|_| S::standard_normal(&mut rng)).collect();
        let noise = cov_chol.mul_lower(&z);
        particles.push((0..d).map(|k| xp[k] + shift[k] + noise[k]).collect());
    }
    finish(state, particles, &raw, 0, step, t)
}

fn auxiliary<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    state: &mut FilterState<S>,
    y: &Observation<S>,
    step: &RngStream,
) -> Result<StepReport<S>> {
    let t = y.time;
    let prev = &state.ensemble.states;
    let n = prev.len();
    let mut first = Vec::with_capacity(n);
    for x in prev {
        let mu = model
            .transition_mean(x, t)
            .ok_or(Error::UnsupportedModel("the auxiliary filter needs a transition mean"))?;
        first.push(model.log_likelihood(y, &mu));
    }
    let first_stage = weigh(&first, t)?;
    let ancestors = multinomial_indices(&first_stage.log_weights, n, &mut step.child(label::AUXILIARY).rng());
    let prop = step.child(label::PROPAGATE);
    let mut particles = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    for (i, &a) in ancestors.iter().enumerate() {
        let x = model.sample_transition(&prev[a], t, &mut prop.child(i as u64).rng());
        let lg = model.log_likelihood(y, &x);
        raw.push(if first_stage.degenerate { lg } else { lg - first[a] });
        particles.push(x);
    }
    let second = weigh(&raw, t)?;
    let increment = if first_stage.degenerate {
        second.increment
    } else {
        first_stage.increment + second.increment
    };
    let degenerate = first_stage.degenerate || second.degenerate;
    finish_weighted(
        state,
        particles,
        second.log_weights,
        increment,
        increment,
        degenerate,
        0,
        step,
        t,
    )
}
