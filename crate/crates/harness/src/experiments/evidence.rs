use nupf_core::filters::{run_particle_filter, ParticleFilter};
use nupf_core::linalg::Matrix;
use nupf_core::models::{simulate, LinearGaussian};
use nupf_core::nudging::NudgeOperator;
use nupf_core::{Observation64, RngStream};
use rayon::prelude::*;

use super::{stage, timed, RunOutput, RunRecord, Runner};
use crate::config::EvidenceCompare;
use crate::error::{HarnessError, Result};
use crate::metrics::{mean, paired_t_greater, paired_t_two_sided, TestResult};

/// Observation-driven kernel of the alternative model: with probability
/// `epsilon` a transition draw takes a log-gradient step of size `gamma`,
/// provided `|∇log g| ≥ threshold` there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceNudge {
    pub epsilon: f64,
    pub gamma: f64,
    pub threshold: f64,
}

impl EvidenceNudge {
    fn operator(&self) -> Result<NudgeOperator<f64>> {
        if self.gamma == 0.0 {
            return Ok(NudgeOperator::Identity);
        }
        Ok(NudgeOperator::thresholded(self.gamma, self.threshold)?)
    }
}

/// Paired log-evidence estimates of the base model and of the model with
/// the observation-driven kernel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvidenceComparison {
    pub log_z0: Vec<f64>,
    pub log_z1: Vec<f64>,
}

impl EvidenceComparison {
    /// Mean of `log Ẑ(M1) − log Ẑ(M0)`.
    pub fn mean_difference(&self) -> f64 {
        mean(&self.log_z1) - mean(&self.log_z0)
    }

    /// One-sided paired test of `log Ẑ(M1) > log Ẑ(M0)`.
    pub fn test_greater(&self) -> TestResult {
        paired_t_greater(&self.log_z1, &self.log_z0)
    }

    pub fn test_two_sided(&self) -> TestResult {
        paired_t_two_sided(&self.log_z1, &self.log_z0)
    }
}

/// Lipschitz constant of `∇log g_t` for a scalar linear-Gaussian
/// likelihood: `max_t c_t² / r`.
fn likelihood_lipschitz(model: &LinearGaussian<f64>) -> Result<f64> {
    if model.d_x() != 1 || model.d_y() != 1 {
        return Err(HarnessError::InvalidConfig(
            "evidence comparison needs a scalar Gaussian model".into(),
        ));
    }
    let r = model.r_diag()[0];
    Ok(model
        .c_sequence()
        .iter()
        .map(|c| c[(0, 0)] * c[(0, 0)] / r)
        .fold(0.0, f64::max))
}

fn check_step(model: &LinearGaussian<f64>, nudge: &EvidenceNudge) -> Result<()> {
    let l = likelihood_lipschitz(model)?;
    if l > 0.0 && nudge.gamma > 1.0 / l {
        return Err(HarnessError::InvalidConfig(format!(
            "gamma = {} exceeds 1/L = {}",
            nudge.gamma,
            1.0 / l
        )));
    }
    Ok(())
}

/// Both estimates with `n` particles from one stream. The two filters share
/// their per-particle substreams, so the pair is positively correlated.
fn evidence_pair(
    model: &LinearGaussian<f64>,
    m1: &ParticleFilter<f64>,
    observations: &[Observation64],
    n: usize,
    stream: &RngStream,
) -> Result<[(f64, f64); 2]> {
    let (z0, t0) =
        timed(|| Ok(run_particle_filter(&ParticleFilter::Bootstrap, model, observations, n, stream)?.log_evidence()))?;
    let (z1, t1) = timed(|| Ok(run_particle_filter(m1, model, observations, n, stream)?.log_evidence()))?;
    Ok([(z0, t0), (z1, t1)])
}

/// `runs` paired estimates of `log Ẑ(M0)` (bootstrap filter) and `log Ẑ(M1)`
/// (bootstrap filter whose transition sampler is the observation-driven
/// kernel). Run `k` uses `stream.child(k)`.
pub fn evidence_compare(
    model: &LinearGaussian<f64>,
    nudge: &EvidenceNudge,
    observations: &[Observation64],
    n: usize,
    runs: usize,
    stream: &RngStream,
) -> Result<EvidenceComparison> {
    check_step(model, nudge)?;
    let m1 = ParticleFilter::Implicit {
        epsilon: nudge.epsilon,
        operator: nudge.operator()?,
    };
    let pairs = (0..runs)
        .into_par_iter()
        .map(|k| evidence_pair(model, &m1, observations, n, &stream.child(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvidenceComparison {
        log_z0: pairs.iter().map(|p| p[0].0).collect(),
        log_z1: pairs.iter().map(|p| p[1].0).collect(),
    })
}

/// Scalar random walk `x_t ~ N(x_{t−1}, q)`, `y_t ~ N(x_t, r)`, `x_0 ~ N(0, 1)`.
pub fn scalar_random_walk(q: f64, r: f64) -> Result<LinearGaussian<f64>> {
    Ok(LinearGaussian::new(
        vec![0.0],
        Matrix::identity(1),
        Matrix::from_diag(&[q]),
        vec![Matrix::identity(1)],
        vec![r],
    )?)
}

pub(crate) struct EvidenceRunner {
    model: LinearGaussian<f64>,
    m1: ParticleFilter<f64>,
    observations: Vec<Observation64>,
    n: usize,
}

impl EvidenceRunner {
    pub fn new(cfg: &EvidenceCompare) -> Result<Self> {
        let model = scalar_random_walk(cfg.q, cfg.r)?;
        let nudge = EvidenceNudge {
            epsilon: cfg.epsilon,
            gamma: cfg.gamma,
            threshold: cfg.threshold,
        };
        check_step(&model, &nudge)?;
        let observations =
            simulate(&model, cfg.horizon, &RngStream::new(cfg.data_seed).child(stage::TRUTH)).observations;
        Ok(Self {
            m1: ParticleFilter::Implicit {
                epsilon: nudge.epsilon,
                operator: nudge.operator()?,
            },
            model,
            observations,
            n: cfg.n,
        })
    }
}

impl Runner for EvidenceRunner {
    fn run(&self, _run: usize, stream: &RngStream) -> Result<RunOutput> {
        let [(z0, t0), (z1, t1)] = evidence_pair(&self.model, &self.m1, &self.observations, self.n, stream)?;
        let mut m0 = RunRecord::new("m0-bpf", self.n, "");
        m0.log_evidence = Some(z0);
        m0.runtime_s = t0;
        let mut m1 = RunRecord::new("m1-implicit", self.n, "");
        m1.log_evidence = Some(z1);
        m1.aux = Some(z1 - z0);
        m1.runtime_s = t1;
        Ok(RunOutput {
            records: vec![m0, m1],
            tables: Vec::new(),
        })
    }
}
