use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GaussianApproximation, ObservationOperator};
use crate::density::normal_log_pdf;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{RngStream, StreamRng};
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Random-walk linear-Gaussian model with random binary observation matrices:
/// `x_0 ~ N(0, I)`, `x_t ~ N(x_{t-1}, q I)`, `y_t ~ N(C_t x_t, r I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearGaussianSpec {
    pub d_x: usize,
    pub d_y: usize,
    pub q: f64,
    pub r: f64,
    /// Draw one `C_t` per time step (otherwise a single `C` for all steps).
    pub time_varying: bool,
    /// Number of `C_t` matrices drawn when time-varying.
    pub horizon: usize,
    /// Bernoulli probability of each entry of `C_t`.
    pub c_density: f64,
}

impl Default for LinearGaussianSpec {
    fn default() -> Self {
        Self {
            d_x: 100,
            d_y: 20,
            q: 0.1,
            r: 1.0,
            time_varying: true,
            horizon: 100,
            c_density: 0.5,
        }
    }
}

impl LinearGaussianSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_y == 0 {
            return Err(Error::InvalidParam("d_x and d_y must be positive".into()));
        }
        if !(self.q >= 0.0) || !(self.r > 0.0) {
            return Err(Error::InvalidParam(format!(
                "need q >= 0 and r > 0 (q = {}, r = {})",
                self.q, self.r
            )));
        }
        if !(0.0..=1.0).contains(&self.c_density) {
            return Err(Error::InvalidParam("c_density must lie in [0, 1]".into()));
        }
        if self.time_varying && self.horizon == 0 {
            return Err(Error::InvalidParam("time-varying model needs horizon >= 1".into()));
        }
        Ok(())
    }
}

/// Linear-Gaussian model with identity transition matrix:
/// `x_0 ~ N(m_0, P_0)`, `x_t ~ N(x_{t-1}, Q)`, `y_t ~ N(C_t x_t, diag(R))`.
#[derive(Debug, Clone)]
pub struct LinearGaussian<S> {
    prior_mean: Vec<S>,
    prior_cov: Matrix<S>,
    prior_chol: Cholesky<S>,
    q: Matrix<S>,
    q_chol: Cholesky<S>,
    c: Vec<Matrix<S>>,
    r_diag: Vec<S>,
}

impl<S: Real> LinearGaussian<S> {
    /// `c` holds `C_1, C_2, …`; a single matrix is used for every step. When
    /// `t` exceeds the sequence the matrices are reused cyclically.
    pub fn new(
        prior_mean: Vec<S>,
        prior_cov: Matrix<S>,
        q: Matrix<S>,
        c: Vec<Matrix<S>>,
        r_diag: Vec<S>,
    ) -> Result<Self> {
        let d_x = prior_mean.len();
        let d_y = r_diag.len();
        let square = |m: &Matrix<S>, what| {
            if m.rows() != d_x || m.cols() != d_x {
                Err(Error::DimensionMismatch {
                    what,
                    expected: d_x,
                    found: if m.rows() != d_x { m.rows() } else { m.cols() },
                })
            } else {
                Ok(())
            }
        };
        square(&prior_cov, "prior covariance")?;
        square(&q, "process covariance")?;
        if c.is_empty() {
            return Err(Error::Empty("observation matrices"));
        }
        for m in &c {
            if m.rows() != d_y {
                return Err(Error::DimensionMismatch {
                    what: "C_t rows",
                    expected: d_y,
                    found: m.rows(),
                });
            }
            if m.cols() != d_x {
                return Err(Error::DimensionMismatch {
                    what: "C_t columns",
                    expected: d_x,
                    found: m.cols(),
                });
            }
        }
        if r_diag.iter().any(|&r| !(r > S::zero())) {
            return Err(Error::InvalidParam("observation variances must be positive".into()));
        }
        let prior_chol = prior_cov.cholesky_psd()?;
        let q_chol = q.cholesky_psd()?;
        Ok(Self {
            prior_mean,
            prior_cov,
            prior_chol,
            q,
            q_chol,
            c,
            r_diag,
        })
    }

    pub fn d_x(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn d_y(&self) -> usize {
        self.r_diag.len()
    }

    pub fn q(&self) -> &Matrix<S> {
        &self.q
    }

    pub fn q_chol(&self) -> &Cholesky<S> {
        &self.q_chol
    }

    pub fn r_diag(&self) -> &[S] {
        &self.r_diag
    }

    pub fn prior_mean_vec(&self) -> &[S] {
        &self.prior_mean
    }

    pub fn prior_cov_matrix(&self) -> &Matrix<S> {
        &self.prior_cov
    }

    pub fn c_sequence(&self) -> &[Matrix<S>] {
        &self.c
    }

    /// Observation matrix for (1-based) time `t`.
    pub fn c_at(&self, t: usize) -> &Matrix<S> {
        if self.c.len() == 1 {
            &self.c[0]
        } else {
            &self.c[(t.max(1) - 1) % self.c.len()]
        }
    }

    fn gaussian(&self, chol: &Cholesky<S>, rng: &mut StreamRng) -> Vec<S> {
        let z: Vec<S> = (0..chol.dim()).map(|_| S::standard_normal(rng)).collect();
        chol.mul_lower(&z)
    }
}

/// Build the random-binary-observation model from `spec`; `C_t` are drawn from
/// `stream`.
pub fn build_linear_gaussian<S: Real>(spec: &LinearGaussianSpec, stream: &RngStream) -> Result<LinearGaussian<S>> {
    spec.validate()?;
    let count = if spec.time_varying { spec.horizon } else { 1 };
    let mut rng = stream.rng();
    let c = (0..count)
        .map(|_| {
            let data = (0..spec.d_x * spec.d_y)
                .map(|_| {
                    if rng.random_bool(spec.c_density) {
                        S::one()
                    } else {
                        S::zero()
                    }
                })
                .collect();
            Matrix::from_vec(spec.d_y, spec.d_x, data)
        })
        .collect::<Result<Vec<_>>>()?;
    LinearGaussian::new(
        vec![S::zero(); spec.d_x],
        Matrix::identity(spec.d_x),
        Matrix::scaled_identity(spec.d_x, S::of(spec.q)),
        c,
        vec![S::of(spec.r); spec.d_y],
    )
}

impl<S: Real> StateSpaceModel<S> for LinearGaussian<S> {
    fn state_dim(&self) -> usize {
        self.d_x()
    }

    fn obs_dim(&self) -> usize {
        self.d_y()
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> StateVector<S> {
        let e = self.gaussian(&self.prior_chol, rng);
        self.prior_mean.iter().zip(e).map(|(&m, e)| m + e).collect()
    }

    fn sample_transition(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> StateVector<S> {
        let e = self.gaussian(&self.q_chol, rng);
        x.iter().zip(e).map(|(&m, e)| m + e).collect()
    }

    fn sample_observation(&self, x: &[S], t: usize, rng: &mut StreamRng) -> Vec<S> {
        self.c_at(t)
            .mul_vec(x)
            .into_iter()
            .zip(&self.r_diag)
            .map(|(m, &r)| m + r.sqrt() * S::standard_normal(rng))
            .collect()
    }

    fn log_likelihood(&self, y: &Observation<S>, x: &[S]) -> S {
        let mean = self.c_at(y.time).mul_vec(x);
        y.values
            .iter()
            .zip(&mean)
            .zip(&self.r_diag)
            .fold(S::zero(), |acc, ((&yi, &mi), &ri)| acc + normal_log_pdf(yi, mi, ri))
    }

    fn log_likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        let c = self.c_at(y.time);
        let scaled: Vec<S> = c
            .mul_vec(x)
            .iter()
            .zip(&y.values)
            .zip(&self.r_diag)
            .map(|((&m, &yi), &r)| (yi - m) / r)
            .collect();
        Some(c.tr_mul_vec(&scaled))
    }

    fn transition_mean(&self, x: &[S], _t: usize) -> Option<StateVector<S>> {
        Some(x.to_vec())
    }

    fn linear_gaussian(&self) -> Option<&LinearGaussian<S>> {
        Some(self)
    }
}

impl<S: Real> GaussianApproximation<S> for LinearGaussian<S> {
    fn prior_mean(&self) -> Vec<S> {
        self.prior_mean.clone()
    }
    fn prior_cov(&self) -> Matrix<S> {
        self.prior_cov.clone()
    }
    fn transition_matrix(&self, _t: usize) -> Matrix<S> {
        Matrix::identity(self.d_x())
    }
    fn process_cov(&self) -> Matrix<S> {
        self.q.clone()
    }
    fn observation_function(&self, x: &[S], t: usize) -> Vec<S> {
        self.c_at(t).mul_vec(x)
    }
    fn observation_jacobian(&self, _x: &[S], t: usize) -> Matrix<S> {
        self.c_at(t).clone()
    }
    fn observation_cov(&self, _t: usize) -> Matrix<S> {
        Matrix::from_diag(&self.r_diag)
    }
}

impl<S: Real> ObservationOperator<S> for LinearGaussian<S> {
    fn observe(&self, x: &[S], t: usize) -> Vec<S> {
        self.c_at(t).mul_vec(x)
    }
    fn obs_noise_var(&self, _t: usize) -> Vec<S> {
        self.r_diag.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::finite_difference_gradient;

    #[test]
    fn zero_noise_scalar_transition_is_identity() {
        let spec = LinearGaussianSpec {
            d_x: 1,
            d_y: 1,
            q: 0.0,
            r: 1.0,
            time_varying: false,
            horizon: 1,
            c_density: 1.0,
        };
        let m: LinearGaussian<f64> = build_linear_gaussian(&spec, &RngStream::new(3)).unwrap();
        assert_eq!(m.c_at(1)[(0, 0)], 1.0);
        let s = RngStream::new(5);
        let a = m.sample_transition(&[0.7], 1, &mut s.child(0).rng());
        let b = m.sample_transition(&[0.7], 1, &mut s.child(1).rng());
        assert_eq!(a, vec![0.7]);
        assert_eq!(a, b);
    }

    #[test]
    fn full_size_likelihood_at_origin() {
        let spec = LinearGaussianSpec::default();
        let m: LinearGaussian<f64> = build_linear_gaussian(&spec, &RngStream::new(11)).unwrap();
        assert_eq!((m.d_x(), m.d_y()), (100, 20));
        let y = Observation::new(vec![0.0; 20], 1);
        let ll = m.log_likelihood(&y, &vec![0.0; 100]);
        let expect = -10.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((ll - expect).abs() < 1e-12);
        assert!(m
            .c_sequence()
            .iter()
            .all(|c| c.as_slice().iter().all(|&v| v == 0.0 || v == 1.0)));
    }

    #[test]
    fn mismatched_c_is_rejected() {
        let err = LinearGaussian::<f64>::new(
            vec![0.0; 3],
            Matrix::identity(3),
            Matrix::identity(3),
            vec![Matrix::zeros(2, 4)],
            vec![1.0, 1.0],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                what: "C_t columns",
                ..
            }
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = LinearGaussianSpec {
            d_x: 6,
            d_y: 3,
            ..Default::default()
        };
        let m: LinearGaussian<f64> = build_linear_gaussian(&spec, &RngStream::new(2)).unwrap();
        let mut rng = RngStream::new(8).rng();
        for t in 1..=20 {
            let x = m.sample_prior(&mut rng);
            let yv = m.sample_observation(&x, t, &mut rng);
            let y = Observation::new(yv, t);
            let x2: Vec<f64> = x.iter().map(|v| v + 0.3 * f64::standard_normal(&mut rng)).collect();
            let an = m.likelihood_gradient(&y, &x2).unwrap();
            let fd = finite_difference_gradient(&m, &y, &x2, 1e-5);
            let err: f64 = an.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = an.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-4 * norm, "t={t} err={err} norm={norm}");
        }
    }
}
