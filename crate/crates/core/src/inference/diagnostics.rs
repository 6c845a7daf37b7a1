use std::ops::Range;

use super::PmhChain;
use crate::error::{Error, Result};

/// Coordinate of `θ = (μ, σ_v, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvParam {
    Mu,
    SigmaV,
    Phi,
}

/// Fraction of accepted proposals over `window` (the whole chain if `None`).
pub fn acceptance_rate(chain: &PmhChain, window: Option<Range<usize>>) -> Result<f64> {
    let w = window.unwrap_or(0..chain.accepted.len());
    if w.is_empty() || w.end > chain.accepted.len() {
        return Err(Error::InsufficientChain {
            len: chain.accepted.len(),
            needed: w.end.max(1),
        });
    }
    let hits = chain.accepted[w.clone()].iter().filter(|&&a| a).count();
    Ok(hits as f64 / w.len() as f64)
}

/// Sample autocorrelation with the biased `1/T` normalization, lags
/// `0..=max_lag`. A constant series is treated as perfectly correlated.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::InsufficientChain {
            len: series.len(),
            needed: max_lag,
        });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>();
    if c0 == 0.0 {
        return Ok(vec![1.0; max_lag + 1]);
    }
    Ok((0..=max_lag)
        .map(|k| dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// ACF of one parameter coordinate of a pMH chain.
pub fn autocorrelation(chain: &PmhChain, param: SvParam, max_lag: usize) -> Result<Vec<f64>> {
    let series: Vec<f64> = chain
        .samples
        .iter()
        .map(|s| match param {
            SvParam::Mu => s.mu,
            SvParam::SigmaV => s.sigma_v,
            SvParam::Phi => s.phi,
        })
        .collect();
    acf(&series, max_lag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::SvParams;
    use crate::rng::RngStream;
    use crate::scalar::Real;

    #[test]
    fn acceptance_rate_windows() {
        let chain = PmhChain {
            samples: vec![SvParams::new(0.0, 0.1, 0.9); 4],
            log_marginals: vec![0.0; 4],
            accepted: vec![true, true, false, true],
            failed_proposals: 0,
        };
        assert_eq!(acceptance_rate(&chain, None).unwrap(), 0.75);
        assert_eq!(acceptance_rate(&chain, Some(2..4)).unwrap(), 0.5);
        assert!(acceptance_rate(&chain, Some(2..9)).is_err());
        assert!(acceptance_rate(&PmhChain::default(), None).is_err());
    }

    #[test]
    fn white_noise_acf_within_bands() {
        let mut rng = RngStream::new(12).rng();
        let t = 5000;
        let x: Vec<f64> = (0..t).map(|_| f64::standard_normal(&mut rng)).collect();
        let r = acf(&x, 20).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        let band = 3.0 / (t as f64).sqrt();
        assert!(r[1..].iter().filter(|v| v.abs() > band).count() <= 1);
    }

    #[test]
    fn ar1_acf_by_hand() {
        // Two-point series [1, -1]: mean 0, c0 = 2, c1 = -1.
        let r = acf(&[1.0, -1.0], 1).unwrap();
        assert_eq!(r, vec![1.0, -0.5]);
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }
}
