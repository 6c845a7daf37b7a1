use super::kalman::{gaussian_update, GaussianBelief, KalmanOutput};
use crate::error::Result;
use crate::models::GaussianApproximation;
use crate::scalar::Real;
use crate::ssm::Observation;

/// Extended Kalman filter step: exact linear prediction, observation model
/// linearized at the predicted mean.
pub fn ekf_step<S: Real, M: GaussianApproximation<S> + ?Sized>(
    model: &M,
    belief: &GaussianBelief<S>,
    y: &Observation<S>,
) -> Result<(GaussianBelief<S>, S)> {
    let t = y.time;
    let f = model.transition_matrix(t);
    let mean: Vec<S> = f
        .mul_vec(&belief.mean)
        .into_iter()
        .zip(model.transition_offset(t))
        .map(|(a, b)| a + b)
        .collect();
    let cov = f
        .matmul(&belief.cov)
        .matmul(&f.transpose())
        .add(&model.process_cov())
        .symmetrize();
    let h = model.observation_function(&mean, t);
    let jac = model.observation_jacobian(&mean, t);
    gaussian_update(&mean, &cov, &y.values, &h, &jac, &model.observation_cov(t))
}

pub fn run_ekf<S: Real, M: GaussianApproximation<S> + ?Sized>(
    model: &M,
    observations: &[Observation<S>],
) -> Result<KalmanOutput<S>> {
    let mut belief = GaussianBelief {
        mean: model.prior_mean(),
        cov: model.prior_cov(),
    };
    let mut out = KalmanOutput {
        means: Vec::with_capacity(observations.len()),
        covariances: Vec::with_capacity(observations.len()),
        log_evidence_increments: Vec::with_capacity(observations.len()),
    };
    for y in observations {
        let (next, inc) = ekf_step(model, &belief, y)?;
        out.means.push(next.mean.clone());
        out.covariances.push(next.cov.clone());
        out.log_evidence_increments.push(inc);
        belief = next;
    }
    Ok(out)
}
