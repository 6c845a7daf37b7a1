use nupf_core::filters::{EvidenceTiming, ParticleFilter};
use nupf_core::inference::{
    autocorrelation, log_return_preprocess, npf_run, pmh_run, InnerFilter, NpfConfig, PmhConfig, SvParam,
};
use nupf_core::{Observation64, RngStream};

use super::{stage, timed, RunOutput, RunRecord, Runner};
use crate::config::{sv_nudge, SvFilters, SvNpf, SvPmh};
use crate::error::Result;
use crate::io::{chain_table, fmt_f64, load_prices, Table};

/// Bootstrap and nudged inner filters with `n` particles; the nudged one
/// reports evidence with the given timing.
fn inner_filters(f: &SvFilters, n: usize, timing: EvidenceTiming) -> Result<[InnerFilter<f64>; 2]> {
    let nudge = sv_nudge(f);
    let nupf = ParticleFilter::Nudged {
        selector: nudge.selector(n),
        operator: nudge.operator.build(1)?,
        evidence: timing,
    };
    Ok([
        InnerFilter::new(ParticleFilter::Bootstrap, n)?,
        InnerFilter::new(nupf, n)?,
    ])
}

fn observations(prices: Option<&std::path::Path>) -> Result<Vec<Observation64>> {
    Ok(log_return_preprocess(&load_prices(prices)?)?)
}

/// Nested particle filter evidence with both inner filters. The nudged
/// filter's evidence uses the likelihoods before nudging.
pub(crate) struct NpfRunner {
    cfg: SvNpf,
    observations: Vec<Observation64>,
    inner: [InnerFilter<f64>; 2],
}

impl NpfRunner {
    pub fn new(cfg: &SvNpf) -> Result<Self> {
        Ok(Self {
            observations: observations(cfg.prices.as_deref())?,
            inner: inner_filters(&cfg.nudge, cfg.n, EvidenceTiming::PreNudge)?,
            cfg: cfg.clone(),
        })
    }
}

impl Runner for NpfRunner {
    fn run(&self, run: usize, stream: &RngStream) -> Result<RunOutput> {
        let config = NpfConfig {
            k: self.cfg.k,
            jitter: self.cfg.jitter,
        };
        let fs = stream.child(stage::FILTERS);
        let mut out = RunOutput::default();
        let mut params = Table::new("param_means.csv", &["run", "filter", "mu", "sigma_v", "phi"]);
        for inner in &self.inner {
            let name = inner.filter.name();
            let (o, secs) = timed(|| Ok(npf_run(&self.observations, &self.cfg.prior, &config, inner, &fs)?))?;
            let mut rec = RunRecord::new(name, self.cfg.n, format!("k={}", self.cfg.k));
            rec.log_evidence = Some(o.log_evidence());
            rec.degenerate_steps = o
                .log_evidence_increments
                .iter()
                .filter(|v| **v == f64::NEG_INFINITY)
                .count();
            rec.runtime_s = secs;
            out.records.push(rec);
            if let Some(th) = o.param_means.last() {
                params.push(vec![
                    run.to_string(),
                    name.into(),
                    fmt_f64(th.mu),
                    fmt_f64(th.sigma_v),
                    fmt_f64(th.phi),
                ]);
            }
        }
        out.tables.push(params);
        Ok(out)
    }
}

/// One pMH chain per inner filter and run. The nudged filter's estimate
/// uses the likelihoods after nudging.
pub(crate) struct PmhRunner {
    cfg: SvPmh,
    pmh: PmhConfig,
    observations: Vec<Observation64>,
    inner: [InnerFilter<f64>; 2],
}

impl PmhRunner {
    pub fn new(cfg: &SvPmh, pmh: PmhConfig) -> Result<Self> {
        Ok(Self {
            observations: observations(cfg.prices.as_deref())?,
            inner: inner_filters(&cfg.nudge, cfg.n, EvidenceTiming::PostNudge)?,
            cfg: cfg.clone(),
            pmh,
        })
    }
}

impl Runner for PmhRunner {
    fn run(&self, run: usize, stream: &RngStream) -> Result<RunOutput> {
        let fs = stream.child(stage::FILTERS);
        let mut out = RunOutput::default();
        let mut acf_table = Table::new("acf.csv", &["filter", "chain", "lag", "mu", "sigma_v", "phi"]);
        for inner in &self.inner {
            let name = inner.filter.name();
            let (chain, secs) = timed(|| Ok(pmh_run(&self.observations, &self.cfg.prior, &self.pmh, inner, &fs)?))?;
            let accepted = chain.accepted.iter().filter(|a| **a).count();
            let mut rec = RunRecord::new(name, self.cfg.n, "");
            rec.aux = Some(accepted as f64 / chain.len() as f64);
            rec.log_evidence = chain.log_marginals.last().copied();
            rec.degenerate_steps = chain.failed_proposals;
            rec.runtime_s = secs;
            out.records.push(rec);

            let burn = (self.cfg.burn_in * chain.len() as f64).floor() as usize;
            let kept = nupf_core::inference::PmhChain {
                samples: chain.samples[burn..].to_vec(),
                log_marginals: chain.log_marginals[burn..].to_vec(),
                accepted: chain.accepted[burn..].to_vec(),
                failed_proposals: 0,
            };
            let lag = self.cfg.max_lag.min(kept.len().saturating_sub(1));
            let acfs = [SvParam::Mu, SvParam::SigmaV, SvParam::Phi].map(|p| autocorrelation(&kept, p, lag));
            if let [Ok(a), Ok(b), Ok(c)] = &acfs {
                for l in 0..=lag {
                    acf_table.push(vec![
                        name.into(),
                        run.to_string(),
                        l.to_string(),
                        fmt_f64(a[l]),
                        fmt_f64(b[l]),
                        fmt_f64(c[l]),
                    ]);
                }
            }
            out.tables
                .push(chain_table(format!("chain_{name}_{run:03}.csv"), &chain));
        }
        out.tables.push(acf_table);
        Ok(out)
    }
}
