use serde::{Deserialize, Serialize};

use super::GaussianApproximation;
use crate::density::StudentT;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::StreamRng;
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Manoeuvring target `x = (r₁, r₂, v₁, v₂)` observed through received signal
/// strength at fixed sensors, with Student-t measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSpec {
    pub kappa: f64,
    pub nu: f64,
    pub p0: f64,
    pub eta: f64,
    pub x0: [f64; 4],
    pub x_target: [f64; 4],
    /// Feedback gain `L` (2×4), used by the ground-truth dynamics only.
    pub policy: [[f64; 4]; 2],
    pub sensors: Vec<[f64; 2]>,
    /// Per-coordinate variance of the Gaussian filter prior around `x0`.
    pub prior_var: f64,
    /// Observation variance assumed by the extended Kalman filter.
    pub ekf_obs_var: f64,
}

impl Default for TrackingSpec {
    fn default() -> Self {
        let mut sensors = Vec::with_capacity(10);
        for sx in [100.0, 180.0] {
            for sy in [-160.0, -80.0, 0.0, 80.0, 160.0] {
                sensors.push([sx, sy]);
            }
        }
        Self {
            kappa: 0.04,
            nu: 1.01,
            p0: 1.0,
            eta: 1e-9,
            x0: [140.0, 140.0, 50.0, 0.0],
            x_target: [140.0, -140.0, 0.0, 0.0],
            policy: [[-0.0134, 0.0, -0.0381, 0.0], [0.0, -0.0134, 0.0, -0.0381]],
            sensors,
            prior_var: 1.0,
            ekf_obs_var: 1.0,
        }
    }
}

impl TrackingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParam("tracking needs kappa > 0".into()));
        }
        if !(self.nu > 1.0) {
            return Err(Error::InvalidParam(format!("tracking needs nu > 1, got {}", self.nu)));
        }
        if !(self.p0 > 0.0) || !(self.eta > 0.0) {
            return Err(Error::InvalidParam("tracking needs P0 > 0 and eta > 0".into()));
        }
        if self.sensors.is_empty() {
            return Err(Error::Empty("sensors"));
        }
        if !(self.prior_var >= 0.0) || !(self.ekf_obs_var > 0.0) {
            return Err(Error::InvalidParam("tracking variances must be positive".into()));
        }
        Ok(())
    }

    /// `A = [[I, κI], [0, 0.99 I]]`.
    pub fn transition_matrix(&self) -> [[f64; 4]; 4] {
        let k = self.kappa;
        [
            [1.0, 0.0, k, 0.0],
            [0.0, 1.0, 0.0, k],
            [0.0, 0.0, 0.99, 0.0],
            [0.0, 0.0, 0.0, 0.99],
        ]
    }

    /// `Q = [[κ³/3 I, κ²/2 I], [κ²/2 I, κ I]]`.
    pub fn process_cov(&self) -> [[f64; 4]; 4] {
        let k = self.kappa;
        let (a, b, c) = (k.powi(3) / 3.0, k * k / 2.0, k);
        [[a, 0.0, b, 0.0], [0.0, a, 0.0, b], [b, 0.0, c, 0.0], [0.0, b, 0.0, c]]
    }
}

/// `10 log₁₀(P0 / ‖r − s‖² + η)`.
#[inline]
pub fn rss_db<S: Real>(r: &[S], sensor: &[S; 2], p0: S, eta: S) -> S {
    let dx = r[0] - sensor[0];
    let dy = r[1] - sensor[1];
    S::of(10.0) * (p0 / (dx * dx + dy * dy) + eta).log10()
}

/// `v = (r_t − r_{t−1}) / κ`.
pub fn velocity_from_positions<S: Real>(r_now: &[S], r_prev: &[S], kappa: S) -> [S; 2] {
    [(r_now[0] - r_prev[0]) / kappa, (r_now[1] - r_prev[1]) / kappa]
}

#[derive(Debug, Clone)]
pub struct Tracking<S> {
    spec: TrackingSpec,
    /// Closed-loop (truth) or open-loop (filter) linear part.
    dynamics: Matrix<S>,
    /// Constant input `−B L x•` (truth) or zero.
    offset: Vec<S>,
    a: Matrix<S>,
    q: Matrix<S>,
    q_chol: Cholesky<S>,
    sensors: Vec<[S; 2]>,
    noise: StudentT<S>,
    p0: S,
    eta: S,
    with_policy: bool,
}

impl<S: Real> Tracking<S> {
    fn new(spec: &TrackingSpec, with_policy: bool) -> Result<Self> {
        spec.validate()?;
        let a = Matrix::from_f64_rows(&spec.transition_matrix().iter().map(|r| &r[..]).collect::<Vec<_>>())?;
        let q = Matrix::from_f64_rows(&spec.process_cov().iter().map(|r| &r[..]).collect::<Vec<_>>())?;
        let q_chol = q.cholesky()?;
        let mut dynamics = a.clone();
        let mut offset = vec![S::zero(); 4];
        if with_policy {
            // B = [0 I]ᵀ places L (x − x•) in the velocity rows.
            let data: Vec<S> = (0..16)
                .map(|k| {
                    let (i, j) = (k / 4, k % 4);
                    if i >= 2 {
                        a[(i, j)] + S::of(spec.policy[i - 2][j])
                    } else {
                        a[(i, j)]
                    }
                })
                .collect();
            dynamics = Matrix::from_vec(4, 4, data)?;
            for i in 0..2 {
                let lx: f64 = (0..4).map(|j| spec.policy[i][j] * spec.x_target[j]).sum();
                offset[i + 2] = S::of(-lx);
            }
        }
        Ok(Self {
            dynamics,
            offset,
            a,
            q,
            q_chol,
            sensors: spec.sensors.iter().map(|s| [S::of(s[0]), S::of(s[1])]).collect(),
            noise: StudentT::new(S::of(spec.nu)),
            p0: S::of(spec.p0),
            eta: S::of(spec.eta),
            with_policy,
            spec: spec.clone(),
        })
    }

    pub fn spec(&self) -> &TrackingSpec {
        &self.spec
    }

    pub fn has_policy(&self) -> bool {
        self.with_policy
    }

    pub fn kappa(&self) -> S {
        S::of(self.spec.kappa)
    }

    pub fn initial_state(&self) -> StateVector<S> {
        self.spec.x0.iter().map(|&v| S::of(v)).collect()
    }

    /// Noiseless transition `E[x_t | x_{t-1}]`.
    pub fn skeleton(&self, x: &[S]) -> StateVector<S> {
        self.dynamics
            .mul_vec(x)
            .into_iter()
            .zip(&self.offset)
            .map(|(a, &b)| a + b)
            .collect()
    }

    /// RSS at every sensor for position `r`.
    pub fn rss(&self, x: &[S]) -> Vec<S> {
        self.sensors.iter().map(|s| rss_db(x, s, self.p0, self.eta)).collect()
    }

    /// Gradient of `rss_db` with respect to the position.
    fn rss_gradient(&self, x: &[S], s: &[S; 2]) -> [S; 2] {
        let dx = x[0] - s[0];
        let dy = x[1] - s[1];
        let d2 = dx * dx + dy * dy;
        let c = -S::of(20.0) * self.p0 / (S::LN_10() * d2 * (self.p0 + self.eta * d2));
        [c * dx, c * dy]
    }
}

/// Ground-truth model (with feedback policy) and the filter's open-loop model.
pub fn build_tracking<S: Real>(spec: &TrackingSpec) -> Result<(Tracking<S>, Tracking<S>)> {
    Ok((Tracking::new(spec, true)?, Tracking::new(spec, false)?))
}

impl<S: Real> StateSpaceModel<S> for Tracking<S> {
    fn state_dim(&self) -> usize {
        4
    }

    fn obs_dim(&self) -> usize {
        self.sensors.len()
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> StateVector<S> {
        let sd = S::of(self.spec.prior_var.sqrt());
        self.spec
            .x0
            .iter()
            .map(|&v| S::of(v) + sd * S::standard_normal(rng))
            .collect()
    }

    fn sample_transition(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> StateVector<S> {
        let z: Vec<S> = (0..4).map(|_| S::standard_normal(rng)).collect();
        let u = self.q_chol.mul_lower(&z);
        self.skeleton(x).into_iter().zip(u).map(|(m, e)| m + e).collect()
    }

    fn sample_observation(&self, x: &[S], _t: usize, rng: &mut StreamRng) -> Vec<S> {
        // Student-t as a normal scale mixture: z / sqrt(χ²_ν / ν).
        let nu = self.spec.nu;
        let chi = rand_distr::ChiSquared::new(nu).expect("nu > 1 checked at build");
        self.rss(x)
            .into_iter()
            .map(|h| {
                let z = S::standard_normal(rng);
                let w: f64 = rand::Rng::sample(rng, chi);
                h + z / S::of((w / nu).sqrt())
            })
            .collect()
    }

    fn log_likelihood(&self, y: &Observation<S>, x: &[S]) -> S {
        self.sensors.iter().zip(&y.values).fold(S::zero(), |acc, (s, &yi)| {
            acc + self.noise.log_pdf(yi - rss_db(x, s, self.p0, self.eta))
        })
    }

    fn log_likelihood_gradient(&self, y: &Observation<S>, x: &[S]) -> Option<Vec<S>> {
        let mut g = vec![S::zero(); 4];
        for (s, &yi) in self.sensors.iter().zip(&y.values) {
            let e = yi - rss_db(x, s, self.p0, self.eta);
            let dh = self.rss_gradient(x, s);
            // d/dr log t(y − h(r)) = −score(e) ∇h.
            let sc = self.noise.score(e);
            g[0] = g[0] - sc * dh[0];
            g[1] = g[1] - sc * dh[1];
        }
        Some(g)
    }

    fn transition_mean(&self, x: &[S], _t: usize) -> Option<StateVector<S>> {
        Some(self.skeleton(x))
    }
}

impl<S: Real> GaussianApproximation<S> for Tracking<S> {
    fn prior_mean(&self) -> Vec<S> {
        self.initial_state()
    }
    fn prior_cov(&self) -> Matrix<S> {
        Matrix::scaled_identity(4, S::of(self.spec.prior_var))
    }
    fn transition_matrix(&self, _t: usize) -> Matrix<S> {
        if self.with_policy {
            self.dynamics.clone()
        } else {
            self.a.clone()
        }
    }
    fn transition_offset(&self, _t: usize) -> Vec<S> {
        self.offset.clone()
    }
    fn process_cov(&self) -> Matrix<S> {
        self.q.clone()
    }
    fn observation_function(&self, x: &[S], _t: usize) -> Vec<S> {
        self.rss(x)
    }
    fn observation_jacobian(&self, x: &[S], _t: usize) -> Matrix<S> {
        let mut data = Vec::with_capacity(4 * self.sensors.len());
        for s in &self.sensors {
            let g = self.rss_gradient(x, s);
            data.extend_from_slice(&[g[0], g[1], S::zero(), S::zero()]);
        }
        Matrix::from_vec(self.sensors.len(), 4, data).expect("shape fixed by construction")
    }
    fn observation_cov(&self, _t: usize) -> Matrix<S> {
        Matrix::scaled_identity(self.sensors.len(), S::of(self.spec.ekf_obs_var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::finite_difference_log_gradient;

    #[test]
    fn rss_floor_far_away() {
        let v: f64 = rss_db(&[1e12, 1e12], &[0.0, 0.0], 1.0, 1e-9);
        assert!((v + 90.0).abs() < 1e-9);
    }

    #[test]
    fn velocity_arithmetic() {
        let v: [f64; 2] = velocity_from_positions(&[1.4, 2.2], &[1.0, 3.0], 0.04);
        assert!((v[0] - 10.0).abs() < 1e-12 && (v[1] + 20.0).abs() < 1e-12);
        assert_eq!(velocity_from_positions(&[5.0, 5.0], &[5.0, 5.0], 0.04), [0.0, 0.0]);
    }

    #[test]
    fn gradient_ignores_velocity_and_matches_fd() {
        let (_, m) = build_tracking::<f64>(&TrackingSpec::default()).unwrap();
        let mut rng = crate::rng::RngStream::new(3).rng();
        let x = vec![150.0, 20.0, 3.0, -4.0];
        let y = Observation::new(m.sample_observation(&x, 1, &mut rng), 1);
        let xq = vec![152.0, 17.0, 3.0, -4.0];
        let g = m.log_likelihood_gradient(&y, &xq).unwrap();
        assert_eq!((g[2], g[3]), (0.0, 0.0));
        let fd = finite_difference_log_gradient(&m, &y, &xq, 1e-5);
        for i in 0..2 {
            assert!((g[i] - fd[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn filter_model_drops_policy() {
        let (truth, filt) = build_tracking::<f64>(&TrackingSpec::default()).unwrap();
        let x = truth.initial_state();
        let a = filt.skeleton(&x);
        assert_eq!(a, vec![142.0, 140.0, 49.5, 0.0]);
        let b = truth.skeleton(&x);
        assert!(b[3] != 0.0);
    }

    #[test]
    fn jacobian_matches_fd() {
        let (_, m) = build_tracking::<f64>(&TrackingSpec::default()).unwrap();
        let x = [130.0, -50.0, 0.0, 0.0];
        let h = m.observation_jacobian(&x, 1);
        for (i, s) in m.sensors.iter().enumerate() {
            let e = 1e-5;
            let fd0 = (rss_db(&[x[0] + e, x[1]], s, 1.0, 1e-9) - rss_db(&[x[0] - e, x[1]], s, 1.0, 1e-9)) / (2.0 * e);
            assert!((h[(i, 0)] - fd0).abs() < 1e-6);
        }
    }
}
