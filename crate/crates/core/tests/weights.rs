use astro_float::{BigFloat, Consts, RoundingMode};
use nupf_core::{effective_sample_size, normalize_log_weights, ParticleEnsemble};
use proptest::prelude::*;

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn to_f64(x: &BigFloat) -> f64 {
    format!("{x}").parse().expect("decimal rendering of a finite BigFloat")
}

/// Normalized weights and log-sum computed in 256-bit arithmetic.
fn oracle(raw: &[f64]) -> (Vec<f64>, f64) {
    let mut cc = Consts::new().unwrap();
    let exps: Vec<BigFloat> = raw
        .iter()
        .map(|&r| BigFloat::from_f64(r, P).exp(P, RM, &mut cc))
        .collect();
    let total = exps.iter().fold(BigFloat::from_f64(0.0, P), |acc, e| acc.add(e, P, RM));
    let log_sum = total.ln(P, RM, &mut cc);
    let w = exps.iter().map(|e| to_f64(&e.div(&total, P, RM))).collect();
    (w, to_f64(&log_sum))
}

fn raw_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![
            3 => -50.0..50.0f64,
            1 => -1000.0..-990.0f64,
            1 => -1e-3..1e-3f64,
        ],
        1..40,
    )
}

#[test]
fn oracle_conversion_round_trips() {
    for v in [1.0, -2.5e-7, 123.456, 7.0e-300] {
        assert_eq!(to_f64(&BigFloat::from_f64(v, P)), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn normalized_weights_match_high_precision(raw in raw_weights()) {
        let (lw, log_sum) = normalize_log_weights(&raw).unwrap();
        let (w, ls) = oracle(&raw);
        for (a, b) in lw.iter().zip(&w) {
            prop_assert!((a.exp() - b).abs() <= 1e-10, "{} vs {}", a.exp(), b);
        }
        prop_assert!((log_sum - ls).abs() <= 1e-10 * ls.abs().max(1.0));
    }

    #[test]
    fn normalization_is_shift_invariant(raw in raw_weights(), c in -500.0..500.0f64) {
        let (a, la) = normalize_log_weights(&raw).unwrap();
        let shifted: Vec<f64> = raw.iter().map(|r| r + c).collect();
        let (b, lb) = normalize_log_weights(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.exp() - y.exp()).abs() < 1e-12);
        }
        prop_assert!((lb - la - c).abs() < 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn weights_sum_to_one_and_ess_is_bounded(raw in raw_weights()) {
        let n = raw.len();
        let mut e = ParticleEnsemble::weighted(vec![vec![0.0]; n], raw).unwrap();
        e.normalize().unwrap();
        let s: f64 = e.weights().unwrap().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        let ess = effective_sample_size(&e).unwrap();
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= n as f64 + 1e-9);
    }
}

#[test]
fn f32_normalization_agrees_with_f64() {
    let raw = [0.5f64, -3.0, 2.0, -700.0];
    let (a, _) = normalize_log_weights(&raw).unwrap();
    let raw32: Vec<f32> = raw.iter().map(|&v| v as f32).collect();
    let (b, _) = normalize_log_weights(&raw32).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.exp() - f64::from(y.exp())).abs() < 1e-6);
    }
}
