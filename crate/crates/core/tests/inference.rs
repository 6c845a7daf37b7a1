use nupf_core::filters::{kalman_filter, ParticleFilter};
use nupf_core::inference::{
    npf_evidence, npf_step, pmh_run, pmh_run_with, InnerFilter, JitterKernel, NpfState, ParamPrior, Parameterized,
    PmhConfig, SvParams,
};
use nupf_core::linalg::Matrix;
use nupf_core::models::{simulate, LinearGaussian};
use nupf_core::{Observation, Result, RngStream, StreamRng};
use rand::Rng;

/// Exact log-evidence of `x_t = μ + φ(x_{t-1} − μ) + σ_v u_t`,
/// `y_t = x_t + e_t`, `e_t ~ N(0, r)`, stationary prior.
fn ar1_log_evidence(th: &SvParams, y: &[f64], r: f64) -> f64 {
    let (mu, phi, q) = (th.mu, th.phi, th.sigma_v * th.sigma_v);
    let mut m = mu;
    let mut p = q / (1.0 - phi * phi);
    let mut ll = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        if t > 0 {
            m = mu + phi * (m - mu);
            p = phi * phi * p + q;
        }
        let s = p + r;
        let e = yt - m;
        ll += -0.5 * ((std::f64::consts::TAU * s).ln() + e * e / s);
        let k = p / s;
        m += k * e;
        p *= 1.0 - k;
    }
    ll
}

fn ar1_data(th: &SvParams, t: usize, r: f64, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed).rng();
    let mut normal = || {
        let d = rand_distr::StandardNormal;
        rng.sample::<f64, _>(d)
    };
    let mut x = th.mu + th.sigma_v / (1.0 - th.phi * th.phi).sqrt() * normal();
    let mut y = Vec::with_capacity(t);
    for k in 0..t {
        if k > 0 {
            x = th.mu + th.phi * (x - th.mu) + th.sigma_v * normal();
        }
        y.push(x + r.sqrt() * normal());
    }
    y
}

/// Two-sample Kolmogorov–Smirnov test: returns the asymptotic p-value.
fn ks_p_value(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn ks_helper_sanity() {
    let mut rng = RngStream::new(1).rng();
    let a: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
    let c: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() + 0.1).collect();
    assert!(ks_p_value(&a, &b) > 0.01);
    assert!(ks_p_value(&a, &c) < 1e-6);
}

/// Random-walk Metropolis updating one coordinate at a time, written
/// independently of the library as a reference sampler.
fn reference_chain(y: &[f64], r: f64, iterations: usize, seed: u64) -> Vec<SvParams> {
    let prior = ParamPrior::default();
    let target = |th: &SvParams| {
        let lp = prior.log_density(th);
        if lp.is_finite() {
            lp + ar1_log_evidence(th, y, r)
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut rng = RngStream::new(seed).rng();
    let mut th = [0.0, 0.2, 0.95];
    let mut cur = target(&SvParams::from_array(th));
    let sd = [0.3, 0.05, 0.01];
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        for j in 0..3 {
            let mut p = th;
            p[j] += sd[j] * rng.sample::<f64, _>(rand_distr::StandardNormal);
            let lp = target(&SvParams::from_array(p));
            if rng.random::<f64>().ln() < lp - cur {
                th = p;
                cur = lp;
            }
        }
        out.push(SvParams::from_array(th));
    }
    out
}

#[test]
fn pmh_with_exact_likelihood_matches_reference_sampler() {
    let truth = SvParams::new(-0.2, 0.4, 0.9);
    let r = 0.5;
    let y = ar1_data(&truth, 60, r, 2);
    let config = PmhConfig {
        iterations: 400_000,
        proposal_var: [4e-2, 4e-3, 1e-4],
        initial: SvParams::new(0.5, 0.3, 0.97),
    };
    let chain = pmh_run_with(
        |th, _| Ok(ar1_log_evidence(th, &y, r)),
        &ParamPrior::default(),
        &config,
        &RngStream::new(3),
    )
    .unwrap();
    assert!(chain.samples.iter().all(|s| s.in_support()));
    let reference = reference_chain(&y, r, 400_000, 4);
    // Drop 10% burn-in, keep every 36th draw: 10⁴ samples each.
    let thin =
        |v: &[SvParams], f: fn(&SvParams) -> f64| -> Vec<f64> { v[40_000..].iter().step_by(36).map(f).collect() };
    for (name, f) in [
        ("mu", (|s: &SvParams| s.mu) as fn(&SvParams) -> f64),
        ("sigma_v", |s: &SvParams| s.sigma_v),
        ("phi", |s: &SvParams| s.phi),
    ] {
        let a = thin(&chain.samples, f);
        let b = thin(&reference, f);
        assert_eq!(a.len(), 10_000);
        let p = ks_p_value(&a, &b);
        assert!(p > 0.01, "{name}: KS p = {p}");
    }
}

#[test]
fn pmh_with_particle_estimates_stays_in_support() {
    let th = SvParams::new(-0.2, 0.15, 0.97);
    let m = <SvParams as Parameterized<f64>>::model(&th).unwrap();
    let y = simulate(&m, 40, &RngStream::new(5)).observations;
    let inner = InnerFilter::new(ParticleFilter::Bootstrap, 30).unwrap();
    let config = PmhConfig {
        iterations: 300,
        proposal_var: [0.05, 0.01, 0.01],
        initial: th,
    };
    let chain = pmh_run(&y, &ParamPrior::default(), &config, &inner, &RngStream::new(6)).unwrap();
    assert_eq!(chain.len(), 300);
    assert!(chain.samples.iter().all(|s| s.in_support() && s.phi >= 0.0));
    assert!(chain.log_marginals.iter().all(|v| v.is_finite()));
    // Rejected iterations keep the previous state and its estimate.
    for k in 1..chain.len() {
        if !chain.accepted[k] {
            assert_eq!(chain.samples[k], chain.samples[k - 1]);
            assert_eq!(chain.log_marginals[k], chain.log_marginals[k - 1]);
        }
    }
}

/// A fixed linear-Gaussian model posing as a parameter value.
#[derive(Clone)]
struct Fixed(LinearGaussian<f64>);

impl Parameterized<f64> for Fixed {
    type Model = LinearGaussian<f64>;
    fn model(&self) -> Result<LinearGaussian<f64>> {
        Ok(self.0.clone())
    }
}

#[test]
fn npf_evidence_is_unbiased_for_a_known_model() {
    let m = LinearGaussian::new(
        vec![0.0],
        Matrix::identity(1),
        Matrix::from_diag(&[0.8]),
        vec![Matrix::identity(1)],
        vec![0.6],
    )
    .unwrap();
    let y = simulate(&m, 10, &RngStream::new(7)).observations;
    let exact = kalman_filter(&m, &y).unwrap().log_evidence();
    let inner = InnerFilter::new(ParticleFilter::Bootstrap, 20).unwrap();
    let runs = 1500u64;
    let base = RngStream::new(8);
    let ratios: Vec<f64> = (0..runs)
        .map(|k| {
            let s = base.child(k);
            let mut state = NpfState::new(vec![Fixed(m.clone()); 5], 20, &s).unwrap();
            let inc: Vec<f64> = y
                .iter()
                .map(|obs| {
                    npf_step(&mut state, obs, |p: &Fixed, _: &mut StreamRng| p.clone(), &inner, &s)
                        .unwrap()
                        .log_evidence_increment
                })
                .collect();
            (npf_evidence(&inc) - exact).exp()
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / runs as f64;
    let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
    let se = sd / (runs as f64).sqrt();
    assert!((mean - 1.0).abs() < 4.0 * se, "ratio {mean} ± {se}");
    assert!(sd < 0.5, "spread {sd}");
}

#[test]
fn npf_parameters_stay_in_support() {
    let th = SvParams::new(-0.2, 0.15, 0.97);
    let m = <SvParams as Parameterized<f64>>::model(&th).unwrap();
    let y: Vec<Observation<f64>> = simulate(&m, 30, &RngStream::new(9)).observations;
    let s = RngStream::new(10);
    let mut state = NpfState::<f64, SvParams>::from_prior(&ParamPrior::default(), 20, 10, &s).unwrap();
    let wide = JitterKernel {
        var_mu: 0.5,
        var_sigma_v: 0.05,
        var_phi: 0.05,
    };
    let inner = InnerFilter::new(ParticleFilter::Bootstrap, 10).unwrap();
    for obs in &y {
        npf_step(
            &mut state,
            obs,
            |p: &SvParams, r: &mut StreamRng| wide.apply(p, r),
            &inner,
            &s,
        )
        .unwrap();
        assert!(state.thetas.iter().all(|t| t.in_support() && t.phi.abs() < 1.0));
    }
}

#[test]
fn jitter_truncation_holds_over_a_million_draws() {
    let k = JitterKernel::default();
    let th = SvParams::new(0.0, 0.005, 0.995);
    let mut rng = RngStream::new(11).rng();
    let mut below = 0;
    for _ in 0..1_000_000 {
        let j = k.apply(&th, &mut rng);
        assert!(j.sigma_v > 0.0 && (-1.0..=1.0).contains(&j.phi));
        below += usize::from(j.sigma_v < th.sigma_v);
    }
    // σ_v sits half a standard deviation above zero, so the fraction
    // landing below the start is P(−0.5 < Z < 0) / P(Z > −0.5).
    let phi = |z: f64| statrs::distribution::ContinuousCDF::cdf(&statrs::distribution::Normal::standard(), z);
    let expect = (phi(0.0) - phi(-0.5)) / (1.0 - phi(-0.5));
    let frac = below as f64 / 1e6;
    assert!((frac - expect).abs() < 0.003, "{frac} vs {expect}");
}
