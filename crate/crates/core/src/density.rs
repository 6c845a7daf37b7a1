//! Log-densities used by the bundled likelihoods.

use statrs::function::gamma::ln_gamma;

use crate::scalar::Real;

/// `log N(x; mean, var)` for a scalar.
#[inline]
pub fn normal_log_pdf<S: Real>(x: S, mean: S, var: S) -> S {
    let d = x - mean;
    -S::of(0.5) * ((S::TAU() * var).ln() + d * d / var)
}

/// `log N(y; mean, diag(var))`.
pub fn diag_normal_log_pdf<S: Real>(y: &[S], mean: &[S], var: &[S]) -> S {
    debug_assert_eq!(y.len(), mean.len());
    debug_assert_eq!(y.len(), var.len());
    y.iter()
        .zip(mean)
        .zip(var)
        .fold(S::zero(), |acc, ((&yi, &mi), &vi)| acc + normal_log_pdf(yi, mi, vi))
}

/// Standard Student-t with `nu` degrees of freedom, location 0 and scale 1.
#[derive(Debug, Clone, Copy)]
pub struct StudentT<S> {
    nu: S,
    log_norm: S,
}

impl<S: Real> StudentT<S> {
    pub fn new(nu: S) -> Self {
        let n = nu.as_f64();
        let log_norm = ln_gamma((n + 1.0) / 2.0) - ln_gamma(n / 2.0) - 0.5 * (n * std::f64::consts::PI).ln();
        Self {
            nu,
            log_norm: S::of(log_norm),
        }
    }

    pub fn nu(&self) -> S {
        self.nu
    }

    #[inline]
    pub fn log_pdf(&self, e: S) -> S {
        self.log_norm - (self.nu + S::one()) * S::of(0.5) * (S::one() + e * e / self.nu).ln()
    }

    /// `d/de log t(e)`.
    #[inline]
    pub fn score(&self, e: S) -> S {
        -(self.nu + S::one()) * e / (self.nu + e * e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_limit() {
        // nu = 1 is the standard Cauchy density 1 / (pi (1 + e^2)).
        let t = StudentT::new(1.0_f64);
        for e in [0.0, 0.5, -3.0, 40.0] {
            let exact = -(std::f64::consts::PI * (1.0 + e * e)).ln();
            assert!((t.log_pdf(e) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn score_matches_finite_difference() {
        let t = StudentT::new(1.01_f64);
        for e in [-5.0, -0.3, 0.0, 0.7, 12.0] {
            let h = 1e-6;
            let fd = (t.log_pdf(e + h) - t.log_pdf(e - h)) / (2.0 * h);
            assert!((fd - t.score(e)).abs() < 1e-7);
        }
    }

    #[test]
    fn normal_density_integrates_to_one() {
        let (a, b, n) = (-12.0_f64, 12.0, 20_000);
        let h = (b - a) / n as f64;
        let s: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * normal_log_pdf(a + i as f64 * h, 0.3, 1.7).exp()
            })
            .sum::<f64>()
            * h;
        assert!((s - 1.0).abs() < 1e-10);
    }
}
