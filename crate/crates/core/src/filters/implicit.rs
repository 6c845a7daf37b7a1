use rand::Rng;

use crate::error::Result;
use crate::nudging::NudgeOperator;
use crate::rng::StreamRng;
use crate::scalar::Real;
use crate::ssm::{Observation, StateSpaceModel, StateVector};

/// Draw from the observation-driven kernel: `x̄ ~ τ_t(· | x_prev)`, then with
/// probability `epsilon` move `x̄` with `operator`.
///
/// Returns the draw and whether it was nudged. The transition consumes `rng`
/// first, so with `epsilon = 0` the draw equals a plain transition draw.
pub fn implicit_kernel_sample<S: Real, M: StateSpaceModel<S> + ?Sized>(
    x_prev: &[S],
    model: &M,
    y: &Observation<S>,
    epsilon: S,
    operator: &NudgeOperator<S>,
    rng: &mut StreamRng,
) -> Result<(StateVector<S>, bool)> {
    let x = model.sample_transition(x_prev, y.time, rng);
    let u: f64 = rng.random();
    if u < epsilon.as_f64() {
        Ok((operator.apply(model, y, &x, x_prev, rng)?, true))
    } else {
        Ok((x, false))
    }
}
