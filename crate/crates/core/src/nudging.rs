//! Nudging operators and the selection of which particles to nudge.
//!
//! An operator maps a particle to a point of (ideally) higher likelihood. The
//! random-search and thresholded operators never lower `g_t`; plain gradient
//! steps only do so for small enough step sizes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::StreamRng;
use crate::scalar::{all_finite, norm_sq, Real};
use crate::ssm::{finite_difference_gradient, finite_difference_log_gradient, Observation, StateSpaceModel};

/// Step used when a model has no closed-form gradient.
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScheme {
    /// Exactly `M` distinct indices.
    Batch,
    /// Each index independently with probability `M / N`.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NudgeSelector {
    pub scheme: SelectionScheme,
    pub m: usize,
}

impl NudgeSelector {
    pub fn new(scheme: SelectionScheme, m: usize) -> Self {
        Self { scheme, m }
    }

    pub fn batch(m: usize) -> Self {
        Self::new(SelectionScheme::Batch, m)
    }

    pub fn independent(m: usize) -> Self {
        Self::new(SelectionScheme::Independent, m)
    }
}

/// Choose the particles to nudge. The result is sorted ascending.
pub fn select_indices(selector: &NudgeSelector, n: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if selector.m > n {
        return Err(Error::BudgetExceedsN { m: selector.m, n });
    }
    if selector.m == 0 {
        return Ok(Vec::new());
    }
    Ok(match selector.scheme {
        SelectionScheme::Batch => {
            let mut idx = rand::seq::index::sample(rng, n, selector.m).into_vec();
            idx.sort_unstable();
            idx
        }
        SelectionScheme::Independent => {
            let p = selector.m as f64 / n as f64;
            (0..n).filter(|_| rng.random_bool(p)).collect()
        }
    })
}

/// A nudging map `α_t`.
#[derive(Debug, Clone)]
pub enum NudgeOperator<S> {
    Identity,
    /// `x + γ ∇g(x)`, or `x + γ ∇log g(x)` when `use_log`.
    Gradient {
        gamma: S,
        use_log: bool,
    },
    /// First `x + η`, `η ~ N(0, C)`, that strictly raises `g`.
    RandomSearch {
        chol: Cholesky<S>,
        max_tries: usize,
    },
    /// Log-gradient step taken only where `‖∇log g‖ ≥ threshold`.
    Thresholded {
        gamma: S,
        threshold: S,
    },
    /// Apply `inner` to the position block, then set velocities to
    /// `(r_t − r_{t−1}) / κ`. State layout `(r₁, r₂, v₁, v₂)`.
    VelocityCoupling {
        inner: Box<NudgeOperator<S>>,
        kappa: S,
    },
}

impl<S: Real> NudgeOperator<S> {
    pub fn gradient(gamma: S, use_log: bool) -> Self {
        Self::Gradient { gamma, use_log }
    }

    pub fn random_search(cov: &Matrix<S>, max_tries: usize) -> Result<Self> {
        if max_tries == 0 {
            return Err(Error::InvalidParam("random search needs max_tries >= 1".into()));
        }
        Ok(Self::RandomSearch {
            chol: cov.cholesky_psd()?,
            max_tries,
        })
    }

    pub fn thresholded(gamma: S, threshold: S) -> Result<Self> {
        if !(gamma > S::zero()) || !(threshold >= S::zero()) {
            return Err(Error::InvalidParam(
                "thresholded nudging needs gamma > 0 and threshold >= 0".into(),
            ));
        }
        Ok(Self::Thresholded { gamma, threshold })
    }

    pub fn with_velocity_coupling(self, kappa: S) -> Self {
        Self::VelocityCoupling {
            inner: Box::new(self),
            kappa,
        }
    }

    /// Step size of the underlying gradient step, if any.
    pub fn step_size(&self) -> Option<S> {
        match self {
            Self::Gradient { gamma, .. } | Self::Thresholded { gamma, .. } => Some(*gamma),
            Self::VelocityCoupling { inner, .. } => inner.step_size(),
            _ => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Self::Identity => true,
            Self::Gradient { gamma, .. } => *gamma == S::zero(),
            Self::VelocityCoupling { .. } => false,
            _ => false,
        }
    }

    /// Nudge `x`, a draw from the transition out of `prev`.
    ///
    /// `prev` is only read by velocity coupling.
    pub fn apply<M: StateSpaceModel<S> + ?Sized>(
        &self,
        model: &M,
        y: &Observation<S>,
        x: &[S],
        prev: &[S],
        rng: &mut StreamRng,
    ) -> Result<Vec<S>> {
        match self {
            Self::Identity => Ok(x.to_vec()),
            Self::Gradient { gamma, use_log } => nudge_gradient(x, model, y, *gamma, *use_log),
            Self::RandomSearch { chol, max_tries } => Ok(random_search_with(x, model, y, chol, *max_tries, rng)),
            Self::Thresholded { gamma, threshold } => nudge_thresholded(x, model, y, *gamma, *threshold),
            Self::VelocityCoupling { inner, kappa } => {
                let mut out = inner.apply(model, y, x, prev, rng)?;
                nudge_velocity_coupling(&mut out, prev, *kappa);
                Ok(out)
            }
        }
    }
}

fn gradient_of<S: Real, M: StateSpaceModel<S> + ?Sized>(
    model: &M,
    y: &Observation<S>,
    x: &[S],
    use_log: bool,
) -> Vec<S> {
    let h = S::of(FD_STEP);
    if use_log {
        model
            .log_likelihood_gradient(y, x)
            .unwrap_or_else(|| finite_difference_log_gradient(model, y, x, h))
    } else {
        model
            .likelihood_gradient(y, x)
            .unwrap_or_else(|| finite_difference_gradient(model, y, x, h))
    }
}

/// One gradient step on `g` (or on `log g`).
pub fn nudge_gradient<S: Real, M: StateSpaceModel<S> + ?Sized>(
    x: &[S],
    model: &M,
    y: &Observation<S>,
    gamma: S,
    use_log: bool,
) -> Result<Vec<S>> {
    if gamma == S::zero() {
        return Ok(x.to_vec());
    }
    let g = gradient_of(model, y, x, use_log);
    if !all_finite(&g) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(x.iter().zip(&g).map(|(&a, &d)| a + gamma * d).collect())
}

/// Random search with covariance `cov`; returns `x` unchanged after
/// `max_tries` failed proposals.
pub fn nudge_random_search<S: Real, M: StateSpaceModel<S> + ?Sized>(
    x: &[S],
    model: &M,
    y: &Observation<S>,
    cov: &Matrix<S>,
    max_tries: usize,
    rng: &mut StreamRng,
) -> Result<Vec<S>> {
    let chol = cov.cholesky_psd()?;
    Ok(random_search_with(x, model, y, &chol, max_tries, rng))
}

fn random_search_with<S: Real, M: StateSpaceModel<S> + ?Sized>(
    x: &[S],
    model: &M,
    y: &Observation<S>,
    chol: &Cholesky<S>,
    max_tries: usize,
    rng: &mut StreamRng,
) -> Vec<S> {
    let base = model.log_likelihood(y, x);
    let mut z = vec![S::zero(); x.len()];
    for _ in 0..max_tries {
        for v in z.iter_mut() {
            *v = S::standard_normal(rng);
        }
        let cand: Vec<S> = x.iter().zip(chol.mul_lower(&z)).map(|(&a, e)| a + e).collect();
        if model.log_likelihood(y, &cand) > base {
            return cand;
        }
    }
    x.to_vec()
}

/// Log-gradient step on the set `‖∇log g(x)‖ ≥ threshold`.
///
/// A step that would lower `g` (possible when `γ` exceeds the inverse
/// Lipschitz constant of `∇log g`) is discarded, so `g` never decreases.
pub fn nudge_thresholded<S: Real, M: StateSpaceModel<S> + ?Sized>(
    x: &[S],
    model: &M,
    y: &Observation<S>,
    gamma: S,
    threshold: S,
) -> Result<Vec<S>> {
    let g = gradient_of(model, y, x, true);
    if !all_finite(&g) {
        return Err(Error::NonFiniteGradient);
    }
    if norm_sq(&g).sqrt() < threshold {
        return Ok(x.to_vec());
    }
    let cand: Vec<S> = x.iter().zip(&g).map(|(&a, &d)| a + gamma * d).collect();
    if model.log_likelihood(y, &cand) >= model.log_likelihood(y, x) {
        Ok(cand)
    } else {
        Ok(x.to_vec())
    }
}

/// Overwrite the velocity block `x[2..4]` with `(r_t − r_{t−1}) / κ`.
pub fn nudge_velocity_coupling<S: Real>(x: &mut [S], prev: &[S], kappa: S) {
    x[2] = (x[0] - prev[0]) / kappa;
    x[3] = (x[1] - prev[1]) / kappa;
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateStatus {
    Ok,
    Warning(String),
}

/// Rate conditions `M ≤ √N` and, for gradient steps, `γ M ≤ √N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateGuard {
    pub n: usize,
    pub m: usize,
    pub gamma: Option<f64>,
}

pub fn validate_rate_guard(guard: &RateGuard) -> RateStatus {
    let root = (guard.n as f64).sqrt();
    let m = guard.m as f64;
    let mut problems = Vec::new();
    if m > root {
        problems.push(format!("M = {} exceeds sqrt(N) = {root:.3}", guard.m));
    }
    if let Some(g) = guard.gamma {
        if g * m > root {
            problems.push(format!("gamma * M = {:.3} exceeds sqrt(N) = {root:.3}", g * m));
        }
    }
    if problems.is_empty() {
        RateStatus::Ok
    } else {
        let msg = problems.join("; ");
        log::warn!("nudging outside the convergence-rate regime: {msg}");
        RateStatus::Warning(msg)
    }
}

/// Which map to apply to selected particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    Gradient,
    RandomSearch,
    Thresholded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: OperatorKind,
    pub gamma: f64,
    pub use_log: bool,
    /// Random search covariance is `cov_scale · I`.
    pub cov_scale: f64,
    pub max_tries: usize,
    pub threshold: f64,
    /// When set, velocities follow nudged positions with this time step.
    pub velocity_kappa: Option<f64>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            kind: OperatorKind::Gradient,
            gamma: 0.1,
            use_log: false,
            cov_scale: 1.0,
            max_tries: 50,
            threshold: 0.0,
            velocity_kappa: None,
        }
    }
}

impl OperatorConfig {
    pub fn build<S: Real>(&self, d_x: usize) -> Result<NudgeOperator<S>> {
        let op = match self.kind {
            OperatorKind::Identity => NudgeOperator::Identity,
            OperatorKind::Gradient => NudgeOperator::gradient(S::of(self.gamma), self.use_log),
            OperatorKind::RandomSearch => {
                if !(self.cov_scale >= 0.0) {
                    return Err(Error::InvalidParam("cov_scale must be non-negative".into()));
                }
                NudgeOperator::random_search(&Matrix::scaled_identity(d_x, S::of(self.cov_scale)), self.max_tries)?
            }
            OperatorKind::Thresholded => NudgeOperator::thresholded(S::of(self.gamma), S::of(self.threshold))?,
        };
        Ok(match self.velocity_kappa {
            Some(k) if d_x == 4 => op.with_velocity_coupling(S::of(k)),
            Some(_) => {
                return Err(Error::InvalidParam(
                    "velocity coupling needs a 4-dimensional state".into(),
                ))
            }
            None => op,
        })
    }
}

/// Selection scheme, budget and operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NudgeConfig {
    pub scheme: SelectionScheme,
    /// Budget `M`; `⌊√N⌋` when absent.
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub operator: OperatorConfig,
}

impl Default for NudgeConfig {
    fn default() -> Self {
        Self {
            scheme: SelectionScheme::Batch,
            m: None,
            operator: OperatorConfig::default(),
        }
    }
}

impl NudgeConfig {
    pub fn budget(&self, n: usize) -> usize {
        self.m.unwrap_or_else(|| (n as f64).sqrt().floor() as usize)
    }

    pub fn selector(&self, n: usize) -> NudgeSelector {
        NudgeSelector::new(self.scheme, self.budget(n))
    }

    /// Check the rate guard for `n` particles (warns, never fails).
    pub fn rate_status(&self, n: usize) -> RateStatus {
        let gamma = match self.operator.kind {
            OperatorKind::Gradient | OperatorKind::Thresholded => Some(self.operator.gamma),
            _ => None,
        };
        validate_rate_guard(&RateGuard {
            n,
            m: self.budget(n),
            gamma,
        })
    }
}
