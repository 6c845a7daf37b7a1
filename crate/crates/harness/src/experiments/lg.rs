use nupf_core::filters::{kalman_filter, ParticleFilter};
use nupf_core::models::{build_linear_gaussian, simulate};
use nupf_core::RngStream;

use super::{score_particle_filter, stage, timed, RunOutput, RunRecord, Runner};
use crate::config::{LgCompare, LgFilter};
use crate::error::Result;

pub(crate) struct LgRunner {
    cfg: LgCompare,
}

impl LgRunner {
    pub fn new(cfg: &LgCompare) -> Result<Self> {
        cfg.nudge.operator.build::<f64>(cfg.model.d_x)?;
        Ok(Self { cfg: cfg.clone() })
    }

    fn filter(&self, f: LgFilter, n: usize) -> Result<ParticleFilter<f64>> {
        let nudge = &self.cfg.nudge;
        Ok(match f {
            LgFilter::OptimalPf => ParticleFilter::OptimalProposal,
            LgFilter::NupfPw => ParticleFilter::ProperlyWeighted {
                gamma: nudge.operator.gamma,
                epsilon: self.cfg.pw_epsilon,
            },
            LgFilter::Bpf => ParticleFilter::Bootstrap,
            LgFilter::Nupf => ParticleFilter::nudged(nudge.selector(n), nudge.operator.build(self.cfg.model.d_x)?),
        })
    }
}

impl Runner for LgRunner {
    fn run(&self, _run: usize, stream: &RngStream) -> Result<RunOutput> {
        // A fresh set of C_t per run, shared by every filter in the run.
        let model = build_linear_gaussian::<f64>(&self.cfg.model, &stream.child(stage::MODEL))?;
        let traj = simulate(&model, self.cfg.model.horizon, &stream.child(stage::TRUTH));
        let (kalman, secs) = timed(|| Ok(kalman_filter(&model, &traj.observations)?))?;
        let mut out = RunOutput::default();
        let mut rec = RunRecord::new("kalman", 0, "");
        rec.log_evidence = Some(kalman.log_evidence());
        rec.runtime_s = secs;
        out.records.push(rec);
        let truth = traj.hidden_states();
        for &n in &self.cfg.n {
            let fs = stream.child(stage::FILTERS).child(n as u64);
            for &f in &self.cfg.filters {
                let filter = self.filter(f, n)?;
                let (rec, _) = score_particle_filter(
                    filter.name(),
                    "",
                    &filter,
                    &model,
                    &traj.observations,
                    n,
                    &fs,
                    &kalman.means,
                    truth,
                )?;
                out.records.push(rec);
            }
        }
        Ok(out)
    }
}
