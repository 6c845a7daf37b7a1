use nupf_core::filters::{run_ekf, ParticleFilter};
use nupf_core::models::{build_tracking, simulate_from};
use nupf_core::RngStream;

use super::{path_table, push_path, score_particle_filter, stage, timed, RunOutput, RunRecord, Runner};
use crate::config::TrackingExperiment;
use crate::error::Result;
use crate::metrics::nmse_vs_reference;

pub(crate) struct TrackingRunner {
    cfg: TrackingExperiment,
}

impl TrackingRunner {
    pub fn new(cfg: &TrackingExperiment) -> Result<Self> {
        cfg.nudge.operator.build::<f64>(4)?;
        Ok(Self { cfg: cfg.clone() })
    }
}

impl Runner for TrackingRunner {
    fn run(&self, run: usize, stream: &RngStream) -> Result<RunOutput> {
        // The truth follows the controlled dynamics; the filters do not.
        let (truth, model) = build_tracking::<f64>(&self.cfg.model)?;
        let traj = simulate_from(
            &truth,
            truth.initial_state(),
            self.cfg.horizon,
            &stream.child(stage::TRUTH),
        );
        let x = traj.hidden_states();
        let mut out = RunOutput::default();
        let mut path = (run == 0).then(|| {
            let mut t = path_table("path.csv", 4);
            push_path(&mut t, "truth", 0, x);
            t
        });

        let (ekf, secs) = timed(|| Ok(run_ekf(&model, &traj.observations)?))?;
        let mut rec = RunRecord::new("ekf", 0, "");
        rec.nmse = Some(nmse_vs_reference(&ekf.means, x, x)?);
        rec.log_evidence = Some(ekf.log_evidence());
        rec.runtime_s = secs;
        out.records.push(rec);
        if let Some(t) = path.as_mut() {
            push_path(t, "ekf", 0, &ekf.means);
        }

        for &n in &self.cfg.n {
            let fs = stream.child(stage::FILTERS).child(n as u64);
            let nupf = ParticleFilter::nudged(self.cfg.nudge.selector(n), self.cfg.nudge.operator.build(4)?);
            for filter in [ParticleFilter::Auxiliary, ParticleFilter::Bootstrap, nupf] {
                let (rec, fo) =
                    score_particle_filter(filter.name(), "", &filter, &model, &traj.observations, n, &fs, x, x)?;
                if let Some(t) = path.as_mut() {
                    push_path(t, filter.name(), n, &fo.means);
                }
                out.records.push(rec);
            }
        }
        out.tables.extend(path);
        Ok(out)
    }
}
