use crate::error::{Error, Result};
use crate::linalg::{mvn_log_pdf, Matrix};
use crate::models::LinearGaussian;
use crate::scalar::Real;
use crate::ssm::Observation;

/// Gaussian posterior summary `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief<S> {
    pub mean: Vec<S>,
    pub cov: Matrix<S>,
}

/// Filtering means and covariances for `t = 1..T` plus the log evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput<S> {
    pub means: Vec<Vec<S>>,
    pub covariances: Vec<Matrix<S>>,
    pub log_evidence_increments: Vec<S>,
}

impl<S: Real> KalmanOutput<S> {
    pub fn log_evidence(&self) -> S {
        self.log_evidence_increments.iter().copied().sum()
    }
}

/// Condition the predictive `N(m, P)` on `y ~ N(h + H (x − m), R)`; returns
/// the posterior and `log N(y; h, H P Hᵀ + R)`.
pub(crate) fn gaussian_update<S: Real>(
    mean: &[S],
    cov: &Matrix<S>,
    y: &[S],
    h: &[S],
    jac: &Matrix<S>,
    obs_cov: &Matrix<S>,
) -> Result<(GaussianBelief<S>, S)> {
    let hp = jac.matmul(cov);
    let innov = hp.matmul(&jac.transpose()).add(obs_cov).symmetrize();
    let chol = innov.cholesky().map_err(|_| Error::SingularInnovation)?;
    let log_inc = mvn_log_pdf(y, h, &chol);
    // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ.
    let gain = chol.solve_matrix(&hp).transpose();
    let resid: Vec<S> = y.iter().zip(h).map(|(&a, &b)| a - b).collect();
    let shift = gain.mul_vec(&resid);
    let mean = mean.iter().zip(shift).map(|(&m, s)| m + s).collect();
    let cov = cov.sub(&gain.matmul(&hp)).symmetrize();
    Ok((GaussianBelief { mean, cov }, log_inc))
}

/// One predict/update cycle of the Kalman filter for the random-walk model.
pub fn kalman_step<S: Real>(
    model: &LinearGaussian<S>,
    belief: &GaussianBelief<S>,
    y: &Observation<S>,
) -> Result<(GaussianBelief<S>, S)> {
    let pred_cov = belief.cov.add(model.q());
    let c = model.c_at(y.time);
    let h = c.mul_vec(&belief.mean);
    gaussian_update(
        &belief.mean,
        &pred_cov,
        &y.values,
        &h,
        c,
        &Matrix::from_diag(model.r_diag()),
    )
}

/// Exact filtering recursion and evidence `Σ_t log N(y_t; C_t m_{t|t−1}, C_t P_{t|t−1} C_tᵀ + R)`.
pub fn kalman_filter<S: Real>(model: &LinearGaussian<S>, observations: &[Observation<S>]) -> Result<KalmanOutput<S>> {
    let mut belief = GaussianBelief {
        mean: model.prior_mean_vec().to_vec(),
        cov: model.prior_cov_matrix().clone(),
    };
    let mut out = KalmanOutput {
        means: Vec::with_capacity(observations.len()),
        covariances: Vec::with_capacity(observations.len()),
        log_evidence_increments: Vec::with_capacity(observations.len()),
    };
    for y in observations {
        let (next, inc) = kalman_step(model, &belief, y)?;
        out.means.push(next.mean.clone());
        out.covariances.push(next.cov.clone());
        out.log_evidence_increments.push(inc);
        belief = next;
    }
    Ok(out)
}
