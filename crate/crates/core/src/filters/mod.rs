//! Particle filters (bootstrap, nudged, properly weighted nudged, optimal
//! proposal, auxiliary, observation-driven) and the Gaussian baselines
//! (Kalman, extended Kalman, ensemble Kalman).
//!
//! Every particle filter resamples multinomially at each step, reports the
//! posterior mean of the weighted ensemble *before* resampling, and records
//! the evidence increment `log[(1/N) Σ_i w̃_i]` of its unnormalized weights.

mod ekf;
mod enkf;
mod implicit;
mod kalman;
mod particle;

pub use ekf::{ekf_step, run_ekf};
pub use enkf::{enkf_step, run_enkf};
pub use implicit::implicit_kernel_sample;
pub use kalman::{kalman_filter, kalman_step, GaussianBelief, KalmanOutput};
pub use particle::{EvidenceTiming, ParticleFilter};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{label, RngStream, StreamRng};
use crate::scalar::Real;
use crate::ssm::{normalize_log_weights, Observation, ParticleEnsemble, StateSpaceModel};

/// Filter state between observations: an equally weighted ensemble after
/// resampling, plus running evidence.
#[derive(Debug, Clone)]
pub struct FilterState<S> {
    pub ensemble: ParticleEnsemble<S>,
    /// Index of the last processed observation (0 before the first).
    pub time: usize,
    pub cumulative_log_evidence: S,
    pub last_nudge_count: usize,
}

impl<S: Real> FilterState<S> {
    /// `n` independent prior draws, one substream per particle.
    pub fn initialize<M: StateSpaceModel<S> + ?Sized>(model: &M, n: usize, stream: &RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("particle ensemble"));
        }
        let init = stream.child(label::INIT);
        let states = (0..n)
            .map(|i| model.sample_prior(&mut init.child(i as u64).rng()))
            .collect();
        Ok(Self::from_ensemble(ParticleEnsemble::uniform(states)?))
    }

    pub fn from_ensemble(ensemble: ParticleEnsemble<S>) -> Self {
        Self {
            ensemble,
            time: 0,
            cumulative_log_evidence: S::zero(),
            last_nudge_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ensemble.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }
}

/// What one filter step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<S> {
    /// Posterior-mean estimate of `x_t` from the weighted ensemble.
    pub mean: Vec<S>,
    /// Evidence increment used for `cumulative_log_evidence`.
    pub log_evidence_increment: S,
    /// Evidence increment with likelihoods of the particles before nudging.
    pub pre_nudge_log_evidence_increment: S,
    pub ess: S,
    pub nudged: usize,
    /// All weights were zero; the ensemble was reset to uniform weights.
    pub degenerate: bool,
}

/// Per-step traces of a full filter run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutput<S> {
    pub means: Vec<Vec<S>>,
    pub log_evidence_increments: Vec<S>,
    pub pre_nudge_log_evidence_increments: Vec<S>,
    pub ess: Vec<S>,
    pub nudge_counts: Vec<usize>,
    pub degenerate_steps: usize,
}

impl<S: Real> FilterOutput<S> {
    pub fn with_capacity(t: usize) -> Self {
        Self {
            means: Vec::with_capacity(t),
            log_evidence_increments: Vec::with_capacity(t),
            pre_nudge_log_evidence_increments: Vec::with_capacity(t),
            ess: Vec::with_capacity(t),
            nudge_counts: Vec::with_capacity(t),
            degenerate_steps: 0,
        }
    }

    pub fn push(&mut self, r: StepReport<S>) {
        self.means.push(r.mean);
        self.log_evidence_increments.push(r.log_evidence_increment);
        self.pre_nudge_log_evidence_increments
            .push(r.pre_nudge_log_evidence_increment);
        self.ess.push(r.ess);
        self.nudge_counts.push(r.nudged);
        self.degenerate_steps += usize::from(r.degenerate);
    }

    /// `log Ẑ = Σ_t` increments.
    pub fn log_evidence(&self) -> S {
        self.log_evidence_increments.iter().copied().sum()
    }

    pub fn pre_nudge_log_evidence(&self) -> S {
        self.pre_nudge_log_evidence_increments.iter().copied().sum()
    }
}

/// Draw `n` ancestor indices i.i.d. from normalized log-weights.
pub(crate) fn multinomial_indices<S: Real>(log_weights: &[S], n: usize, rng: &mut StreamRng) -> Vec<usize> {
    let w: Vec<f64> = log_weights.iter().map(|lw| lw.as_f64().exp()).collect();
    multinomial_from_weights(&w, n, rng)
}

/// As [`multinomial_indices`], from linear (possibly unnormalized) weights.
pub(crate) fn multinomial_from_weights(weights: &[f64], n: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0_f64;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            // First index whose cumulative weight exceeds u; zero-weight
            // particles (flat cdf segments) are never chosen.
            let k = cdf.partition_point(|&c| c <= u);
            k.min(cdf.len() - 1)
        })
        .collect()
}

/// Multinomial resampling: `N` i.i.d. draws from `Σ w_i δ_{x_i}`, returned
/// with uniform weights.
pub fn resample_multinomial<S: Real>(
    ensemble: &ParticleEnsemble<S>,
    rng: &mut StreamRng,
) -> Result<ParticleEnsemble<S>> {
    if !ensemble.normalized {
        return Err(Error::NotNormalized);
    }
    let idx = multinomial_indices(&ensemble.log_weights, ensemble.len(), rng);
    ParticleEnsemble::uniform(idx.into_iter().map(|i| ensemble.states[i].clone()).collect())
}

/// Outcome of weighting: normalized weights, evidence increment and whether
/// the reset-to-uniform fallback fired.
pub(crate) struct Weighted<S> {
    pub log_weights: Vec<S>,
    pub increment: S,
    pub degenerate: bool,
}

/// Normalize raw log-weights; on total degeneracy fall back to uniform
/// weights (the increment is then `-inf`).
pub(crate) fn weigh<S: Real>(raw: &[S], time: usize) -> Result<Weighted<S>> {
    let n = S::of(raw.len() as f64);
    match normalize_log_weights(raw) {
        Ok((lw, log_sum)) => Ok(Weighted {
            log_weights: lw,
            increment: log_sum - n.ln(),
            degenerate: false,
        }),
        Err(Error::AllWeightsZero) => {
            log::warn!("all particle weights are zero at t = {time}; resetting to uniform weights");
            Ok(Weighted {
                log_weights: vec![-n.ln(); raw.len()],
                increment: S::neg_infinity(),
                degenerate: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// `log[(1/N) Σ exp(raw)]`, `-inf` when every entry is `-inf`.
pub(crate) fn log_mean_exp<S: Real>(raw: &[S]) -> S {
    let m = raw.iter().copied().fold(S::neg_infinity(), S::max);
    if m == S::neg_infinity() {
        return m;
    }
    let s: S = raw.iter().map(|&r| (r - m).exp()).sum();
    m + s.ln() - S::of(raw.len() as f64).ln()
}

/// Run a particle filter over `observations` with `n` particles.
pub fn run_particle_filter<S: Real, M: StateSpaceModel<S> + ?Sized>(
    filter: &ParticleFilter<S>,
    model: &M,
    observations: &[Observation<S>],
    n: usize,
    stream: &RngStream,
) -> Result<FilterOutput<S>> {
    let mut state = FilterState::initialize(model, n, stream)?;
    let mut out = FilterOutput::with_capacity(observations.len());
    for y in observations {
        out.push(filter.step(model, &mut state, y, stream)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_weights_resample_to_the_single_particle() {
        let mut e = ParticleEnsemble::weighted(
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
        )
        .unwrap();
        e.normalize().unwrap();
        let r = resample_multinomial(&e, &mut RngStream::new(1).rng()).unwrap();
        assert!(r.states.iter().all(|s| s[0] == 1.0));
        assert!(r.log_weights.iter().all(|&w| (w + 3f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn unnormalized_ensemble_rejected() {
        let mut e = ParticleEnsemble::uniform(vec![vec![0.0]; 2]).unwrap();
        e.normalized = false;
        assert_eq!(
            resample_multinomial(&e, &mut RngStream::new(1).rng()).unwrap_err(),
            Error::NotNormalized
        );
    }

    #[test]
    fn uniform_resampling_counts_pass_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let n = 50;
        let e = ParticleEnsemble::uniform((0..n).map(|i| vec![i as f64]).collect()).unwrap();
        let s = RngStream::new(7);
        let reps = 200;
        let crit = ChiSquared::new((n - 1) as f64).unwrap().inverse_cdf(0.99);
        let mut rejections = 0;
        for r in 0..reps {
            let out = resample_multinomial(&e, &mut s.child(r).rng()).unwrap();
            let mut counts = vec![0usize; n];
            for x in &out.states {
                counts[x[0] as usize] += 1;
            }
            let stat: f64 = counts.iter().map(|&c| (c as f64 - 1.0).powi(2)).sum();
            if stat > crit {
                rejections += 1;
            }
        }
        // About 1% of repetitions reject under the null.
        assert!(rejections <= 8, "rejections = {rejections}");
    }

    #[test]
    fn resampled_mean_is_unbiased() {
        let states: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin() * 3.0]).collect();
        let lw: Vec<f64> = (0..20).map(|i| -0.3 * i as f64).collect();
        let mut e = ParticleEnsemble::weighted(states, lw).unwrap();
        e.normalize().unwrap();
        let target = e.weighted_mean().unwrap()[0];
        let s = RngStream::new(11);
        let reps = 10_000;
        let means: Vec<f64> = (0..reps)
            .map(|r| {
                let out = resample_multinomial(&e, &mut s.child(r).rng()).unwrap();
                out.states.iter().map(|x| x[0]).sum::<f64>() / 20.0
            })
            .collect();
        let m = means.iter().sum::<f64>() / reps as f64;
        let v = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((m - target).abs() < 3.0 * (v / reps as f64).sqrt());
    }

    #[test]
    fn log_mean_exp_matches_direct() {
        let v = [0.1_f64, -2.0, 1.5];
        let direct = (v.iter().map(|x| x.exp()).sum::<f64>() / 3.0).ln();
        assert!((log_mean_exp(&v) - direct).abs() < 1e-14);
        assert_eq!(log_mean_exp(&[f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
    }
}
