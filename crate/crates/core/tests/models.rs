use nupf_core::linalg::Matrix;
use nupf_core::models::{
    build_linear_gaussian, build_lorenz63, build_lorenz96, build_stochvol, build_tracking, lorenz96_drift, simulate,
    LinearGaussianSpec, Lorenz63Spec, Lorenz96Spec, StochVolSpec, TrackingSpec,
};
use nupf_core::nudging::{nudge_random_search, nudge_thresholded};
use nupf_core::ssm::finite_difference_log_gradient;
use nupf_core::{finite_difference_gradient, Observation, RngStream, StateSpaceModel, StateVector};
use proptest::prelude::*;

/// `(x, y)` pairs where `x` is an independent transition draw from the true
/// previous state and `y` the observation generated by the true state.
fn draws<M: StateSpaceModel<f64>>(truth: &M, n: usize, seed: u64) -> Vec<(StateVector<f64>, Observation<f64>)> {
    let s = RngStream::new(seed);
    let traj = simulate(truth, n, &s);
    let alt = s.child(99);
    (1..=n)
        .map(|t| {
            let x = truth.sample_transition(&traj.states[t - 1], t, &mut alt.child(t as u64).rng());
            (x, traj.observations[t - 1].clone())
        })
        .collect()
}

fn check_gradients<M: StateSpaceModel<f64>>(model: &M, pairs: &[(StateVector<f64>, Observation<f64>)], name: &str) {
    for (x, y) in pairs {
        let exact = model.log_likelihood_gradient(y, x).expect("closed-form gradient");
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let fd = finite_difference_log_gradient(model, y, x, 1e-6 * scale);
        for (a, b) in exact.iter().zip(&fd) {
            assert!(
                (a - b).abs() <= 1e-5 * (1.0 + a.abs()),
                "{name}: log-gradient {a} vs fd {b} at {x:?}"
            );
        }
        let g = model.log_likelihood(y, x).exp();
        if g > 1e-250 {
            let lin = model.likelihood_gradient(y, x).unwrap();
            let fd = finite_difference_gradient(model, y, x, 1e-6 * scale);
            let norm = lin.iter().fold(g, |m, v| m.max(v.abs()));
            for (a, b) in lin.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * norm, "{name}: gradient {a} vs fd {b}");
            }
        }
    }
}

fn check_nudges_raise_likelihood<M: StateSpaceModel<f64>>(
    model: &M,
    pairs: &[(StateVector<f64>, Observation<f64>)],
    name: &str,
) {
    let d = model.state_dim();
    let cov = Matrix::scaled_identity(d, 0.5);
    let s = RngStream::new(77);
    for (k, (x, y)) in pairs.iter().enumerate() {
        let base = model.log_likelihood(y, x);
        let rs = nudge_random_search(x, model, y, &cov, 50, &mut s.child(k as u64).rng()).unwrap();
        assert!(model.log_likelihood(y, &rs) >= base, "{name}: random search lowered g");
        for gamma in [1e-3, 0.1, 5.0] {
            let th = nudge_thresholded(x, model, y, gamma, 0.5).unwrap();
            assert!(
                model.log_likelihood(y, &th) >= base,
                "{name}: thresholded step lowered g"
            );
        }
    }
}

fn lg() -> nupf_core::models::LinearGaussian<f64> {
    let spec = LinearGaussianSpec {
        d_x: 10,
        d_y: 4,
        ..Default::default()
    };
    build_linear_gaussian(&spec, &RngStream::new(3)).unwrap()
}

#[test]
fn closed_form_gradients_match_finite_differences() {
    let m = lg();
    check_gradients(&m, &draws(&m, 100, 1), "linear-gaussian");
    let m = build_lorenz63::<f64>(&Lorenz63Spec::default()).unwrap();
    check_gradients(&m, &draws(&m, 100, 2), "lorenz63");
    let m = build_lorenz96::<f64>(&Lorenz96Spec::default(), &RngStream::new(4)).unwrap();
    check_gradients(&m, &draws(&m, 100, 3), "lorenz96");
    let m = build_stochvol::<f64>(&StochVolSpec::default()).unwrap();
    check_gradients(&m, &draws(&m, 100, 4), "stochvol");
    let (truth, filter) = build_tracking::<f64>(&TrackingSpec::default()).unwrap();
    let pairs = draws(&truth, 100, 5);
    check_gradients(&filter, &pairs, "tracking");
}

#[test]
fn nudging_never_lowers_the_likelihood() {
    let m = lg();
    check_nudges_raise_likelihood(&m, &draws(&m, 300, 11), "linear-gaussian");
    let m = build_lorenz63::<f64>(&Lorenz63Spec::default()).unwrap();
    check_nudges_raise_likelihood(&m, &draws(&m, 300, 12), "lorenz63");
    let m = build_lorenz96::<f64>(&Lorenz96Spec::default(), &RngStream::new(4)).unwrap();
    check_nudges_raise_likelihood(&m, &draws(&m, 300, 13), "lorenz96");
    let m = build_stochvol::<f64>(&StochVolSpec::default()).unwrap();
    check_nudges_raise_likelihood(&m, &draws(&m, 300, 14), "stochvol");
    let (truth, filter) = build_tracking::<f64>(&TrackingSpec::default()).unwrap();
    check_nudges_raise_likelihood(&filter, &draws(&truth, 300, 15), "tracking");
}

#[test]
fn linear_gaussian_increments_have_covariance_q() {
    let spec = LinearGaussianSpec {
        d_x: 3,
        d_y: 2,
        q: 0.4,
        ..Default::default()
    };
    let m = build_linear_gaussian::<f64>(&spec, &RngStream::new(8)).unwrap();
    let traj = simulate(&m, 20_000, &RngStream::new(9));
    let incs: Vec<Vec<f64>> = traj
        .states
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
        .collect();
    let n = incs.len() as f64;
    for i in 0..3 {
        for j in 0..3 {
            let c: f64 = incs.iter().map(|v| v[i] * v[j]).sum::<f64>() / n;
            let expect = if i == j { 0.4 } else { 0.0 };
            // Sample covariance error is about 0.4·√(2/n) ≈ 0.004.
            assert!((c - expect).abs() < 0.02, "cov[{i}][{j}] = {c}");
        }
    }
}

#[test]
fn tracking_skeleton_approaches_target() {
    let (truth, _) = build_tracking::<f64>(&TrackingSpec::default()).unwrap();
    let target = truth.spec().x_target;
    let dist = |x: &[f64]| ((x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2)).sqrt();
    let mut x = truth.initial_state();
    let mut ds = vec![dist(&x)];
    for _ in 0..600 {
        x = truth.skeleton(&x);
        ds.push(dist(&x));
    }
    // The initial velocity points away from the target, so the distance
    // grows slightly on the first step and falls monotonically afterwards.
    assert!(ds[1] > ds[0] && ds[1] - ds[0] < 0.01);
    for t in 1..ds.len() - 1 {
        assert!(ds[t + 1] <= ds[t] + 1e-12, "distance rose at t = {t}");
    }
    assert!(ds[600] < 1.0);
}

proptest! {
    #[test]
    fn lorenz96_drift_commutes_with_rotation(
        x in prop::collection::vec(-10.0..10.0f64, 4..30),
        k in 0usize..30,
        forcing in 0.0..10.0f64,
    ) {
        let d = x.len();
        let k = k % d;
        let rot: Vec<f64> = (0..d).map(|i| x[(i + k) % d]).collect();
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        lorenz96_drift(&x, forcing, &mut a);
        lorenz96_drift(&rot, forcing, &mut b);
        for i in 0..d {
            prop_assert!((b[i] - a[(i + k) % d]).abs() < 1e-12);
        }
    }
}
