//! Error metrics and the summary statistics used by the reports.

use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{HarnessError, Result};

/// `Σ_t ‖ref_t − est_t‖² / Σ_t ‖truth_t‖²`.
///
/// With `reference = truth` this is the NMSE against the ground truth; with
/// Kalman means as `reference` it is the overline-NMSE.
pub fn nmse_vs_reference(estimates: &[Vec<f64>], reference: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != reference.len() {
        return Err(HarnessError::LengthMismatch(estimates.len(), reference.len()));
    }
    if truth.len() != reference.len() {
        return Err(HarnessError::LengthMismatch(truth.len(), reference.len()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((e, r), x) in estimates.iter().zip(reference).zip(truth) {
        if e.len() != r.len() {
            return Err(HarnessError::LengthMismatch(e.len(), r.len()));
        }
        num += e.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        den += x.iter().map(|v| v * v).sum::<f64>();
    }
    if den == 0.0 {
        return Err(HarnessError::ZeroDenominator);
    }
    Ok(num / den)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance (divisor `n − 1`); NaN for fewer than two values.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn std_dev(v: &[f64]) -> f64 {
    variance(v).sqrt()
}

/// One-sided test result: the statistic and `P(T ≥ t)` under the null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Paired t statistic of `a − b` and its degrees of freedom. Identical
/// samples give `t = 0`.
fn paired_t(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let se = (variance(&d) / n).sqrt();
    let t = if se == 0.0 && m == 0.0 { 0.0 } else { m / se };
    (t, n - 1.0)
}

/// Paired t-test of `H1: mean(a − b) > 0`.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> TestResult {
    let (t, df) = paired_t(a, b);
    TestResult {
        statistic: t,
        p_value: t_upper_tail(t, df),
    }
}

/// Paired t-test of `H1: mean(a − b) ≠ 0`.
pub fn paired_t_two_sided(a: &[f64], b: &[f64]) -> TestResult {
    let (t, df) = paired_t(a, b);
    TestResult {
        statistic: t,
        p_value: (2.0 * t_upper_tail(t.abs(), df)).min(1.0),
    }
}

/// Welch t-test of `H1: mean(a) > mean(b)`.
pub fn welch_t_greater(a: &[f64], b: &[f64]) -> TestResult {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    TestResult {
        statistic: t,
        p_value: t_upper_tail(t, df),
    }
}

/// F-test of `H1: var(a) > var(b)` for independent normal samples.
pub fn f_test_greater(a: &[f64], b: &[f64]) -> TestResult {
    let f = variance(a) / variance(b);
    let dist = FisherSnedecor::new((a.len() - 1) as f64, (b.len() - 1) as f64).expect("at least two samples each");
    TestResult {
        statistic: f,
        p_value: dist.sf(f),
    }
}

fn t_upper_tail(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom").sf(t)
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
