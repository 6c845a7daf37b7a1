use super::FilterOutput;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::ObservationOperator;
use crate::rng::{label, RngStream};
use crate::scalar::{dot, Real};
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Stochastic (perturbed-observation) ensemble Kalman filter step.
///
/// Members are propagated through the model, then shifted by
/// `K (y + e_i − h(x_i))` with `K` built from ensemble covariances. The gain
/// is applied in ensemble space (Woodbury identity) when there are more
/// observations than members. Returns the analysis mean.
pub fn enkf_step<S: Real, M: StateSpaceModel<S> + ObservationOperator<S> + ?Sized>(
    model: &M,
    ensemble: &mut [StateVector<S>],
    y: &Observation<S>,
    stream: &RngStream,
) -> Result<Vec<S>> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::InvalidParam(
            "the ensemble Kalman filter needs at least 2 members".into(),
        ));
    }
    let t = y.time;
    let step = stream.child(t as u64);
    let prop = step.child(label::PROPAGATE);
    for (i, x) in ensemble.iter_mut().enumerate() {
        *x = model.sample_transition(x, t, &mut prop.child(i as u64).rng());
    }
    let h: Vec<Vec<S>> = ensemble.iter().map(|x| model.observe(x, t)).collect();
    let r = model.obs_noise_var(t);
    let d_y = r.len();
    let scale = S::one() / S::of((n - 1) as f64).sqrt();
    let x_anom = anomalies(ensemble, scale);
    let y_anom = anomalies(&h, scale);

    let perturb = step.child(label::PERTURB);
    let innovations: Vec<Vec<S>> = h
        .iter()
        .enumerate()
        .map(|(i, hi)| {
            let mut rng = perturb.child(i as u64).rng();
            (0..d_y)
                .map(|k| y.values[k] + r[k].sqrt() * S::standard_normal(&mut rng) - hi[k])
                .collect()
        })
        .collect();

    let solve = InnovationSolver::new(&y_anom, &r)?;
    let d_x = ensemble[0].len();
    let gain_form = n * (d_x + d_y) > d_x * d_y;
    shift_members(ensemble, &x_anom, &y_anom, &innovations, &solve, gain_form);
    Ok(ensemble_mean(ensemble))
}

/// Add `X̃ Ỹᵀ (Ỹ Ỹᵀ + R)⁻¹ d_i` to member `i`. With many members the
/// cross-covariance `X̃ Ỹᵀ` is formed once; otherwise the product is taken
/// in ensemble space.
fn shift_members<S: Real>(
    ensemble: &mut [StateVector<S>],
    x_anom: &[Vec<S>],
    y_anom: &[Vec<S>],
    innovations: &[Vec<S>],
    solve: &InnovationSolver<'_, S>,
    gain_form: bool,
) {
    if gain_form {
        let (d_x, d_y) = (x_anom[0].len(), y_anom[0].len());
        let mut pxy = Matrix::zeros(d_x, d_y);
        for (xj, yj) in x_anom.iter().zip(y_anom) {
            for a in 0..d_x {
                for b in 0..d_y {
                    pxy[(a, b)] = pxy[(a, b)] + xj[a] * yj[b];
                }
            }
        }
        for (x, d) in ensemble.iter_mut().zip(innovations) {
            let shift = pxy.mul_vec(&solve.apply(d));
            for (xk, s) in x.iter_mut().zip(shift) {
                *xk = *xk + s;
            }
        }
    } else {
        for (x, d) in ensemble.iter_mut().zip(innovations) {
            let v = solve.apply(d);
            let coef: Vec<S> = y_anom.iter().map(|yj| dot(yj, &v)).collect();
            for (xj, &c) in x_anom.iter().zip(&coef) {
                for (xk, &a) in x.iter_mut().zip(xj) {
                    *xk = *xk + c * a;
                }
            }
        }
    }
}

/// Scaled deviations `(v_i − v̄) · scale`, one vector per member.
fn anomalies<S: Real>(v: &[Vec<S>], scale: S) -> Vec<Vec<S>> {
    let mean = ensemble_mean(v);
    v.iter()
        .map(|x| x.iter().zip(&mean).map(|(&a, &m)| (a - m) * scale).collect())
        .collect()
}

fn ensemble_mean<S: Real>(v: &[Vec<S>]) -> Vec<S> {
    let n = S::of(v.len() as f64);
    let mut m = vec![S::zero(); v[0].len()];
    for x in v {
        for (a, &b) in m.iter_mut().zip(x) {
            *a = *a + b;
        }
    }
    m.into_iter().map(|a| a / n).collect()
}

/// Applies `(Ỹ Ỹᵀ + R)⁻¹` for member anomalies `Ỹ` and diagonal `R`.
enum InnovationSolver<'a, S> {
    Direct(crate::linalg::Cholesky<S>),
    Woodbury {
        y_anom: &'a [Vec<S>],
        r: &'a [S],
        small: crate::linalg::Cholesky<S>,
    },
}

impl<'a, S: Real> InnovationSolver<'a, S> {
    fn new(y_anom: &'a [Vec<S>], r: &'a [S]) -> Result<Self> {
        let n = y_anom.len();
        let d_y = r.len();
        if d_y <= n {
            let mut s = Matrix::from_diag(r);
            for yj in y_anom {
                for a in 0..d_y {
                    for b in 0..d_y {
                        s[(a, b)] = s[(a, b)] + yj[a] * yj[b];
                    }
                }
            }
            let chol = s.cholesky().map_err(|_| Error::SingularInnovation)?;
            Ok(Self::Direct(chol))
        } else {
            // I + Ỹᵀ R⁻¹ Ỹ, an n×n system.
            let mut g = Matrix::identity(n);
            for i in 0..n {
                for j in 0..=i {
                    let v = (0..d_y).fold(S::zero(), |acc, k| acc + y_anom[i][k] * y_anom[j][k] / r[k]);
                    g[(i, j)] = g[(i, j)] + v;
                    if i != j {
                        g[(j, i)] = g[(j, i)] + v;
                    }
                }
            }
            let small = g.cholesky().map_err(|_| Error::SingularInnovation)?;
            Ok(Self::Woodbury { y_anom, r, small })
        }
    }

    fn apply(&self, d: &[S]) -> Vec<S> {
        match self {
            Self::Direct(chol) => chol.solve(d),
            Self::Woodbury { y_anom, r, small } => {
                let rd: Vec<S> = d.iter().zip(r.iter()).map(|(&a, &b)| a / b).collect();
                let proj: Vec<S> = y_anom.iter().map(|yj| dot(yj, &rd)).collect();
                let w = small.solve(&proj);
                let mut out = rd;
                for (yj, &wj) in y_anom.iter().zip(&w) {
                    for k in 0..out.len() {
                        out[k] = out[k] - yj[k] * wj / r[k];
                    }
                }
                out
            }
        }
    }
}

/// Run the ensemble Kalman filter with `n` members drawn from the prior.
/// Only `means` of the output is populated.
pub fn run_enkf<S: Real, M: StateSpaceModel<S> + ObservationOperator<S> + ?Sized>(
    model: &M,
    observations: &[Observation<S>],
    n: usize,
    stream: &RngStream,
) -> Result<FilterOutput<S>> {
    let init = stream.child(label::INIT);
    let mut ensemble: Vec<StateVector<S>> = (0..n)
        .map(|i| model.sample_prior(&mut init.child(i as u64).rng()))
        .collect();
    let mut out = FilterOutput::with_capacity(observations.len());
    for y in observations {
        out.means.push(enkf_step(model, &mut ensemble, y, stream)?);
    }
    Ok(out)
}
