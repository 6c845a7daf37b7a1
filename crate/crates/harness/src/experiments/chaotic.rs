use nupf_core::filters::{run_enkf, ParticleFilter};
use nupf_core::models::{build_lorenz63, build_lorenz96, simulate_from, Lorenz63Spec, Lorenz96Spec};
use nupf_core::nudging::{NudgeConfig, OperatorConfig, OperatorKind};
use nupf_core::RngStream;

use super::{path_table, push_path, score_particle_filter, stage, timed, RunOutput, RunRecord, Runner};
use crate::config::{L63Misspec, L96Bpf, L96Enkf, RobustnessSweep};
use crate::error::Result;
use crate::metrics::nmse_vs_reference;

struct Entry {
    name: &'static str,
    setting: String,
    /// `None` for the bootstrap filter.
    nudge: Option<NudgeConfig>,
}

impl Entry {
    fn filter(&self, n: usize, d_x: usize) -> Result<ParticleFilter<f64>> {
        Ok(match &self.nudge {
            None => ParticleFilter::Bootstrap,
            Some(c) => ParticleFilter::nudged(c.selector(n), c.operator.build(d_x)?),
        })
    }
}

/// Lorenz 63 with a misspecified `b` in the filters, for the single-setting
/// comparison and for the step-size/variance sweep.
pub(crate) struct L63Runner {
    truth: Lorenz63Spec,
    filter_model: Lorenz63Spec,
    observations: usize,
    n: Vec<usize>,
    entries: Vec<Entry>,
    /// Emit the run-0 sample paths.
    paths: bool,
}

impl L63Runner {
    pub fn misspec(cfg: &L63Misspec) -> Result<Self> {
        Self::new(
            &cfg.model,
            cfg.b_offset,
            cfg.horizon,
            cfg.n.clone(),
            vec![
                Entry {
                    name: "bpf",
                    setting: String::new(),
                    nudge: None,
                },
                Entry {
                    name: "nupf",
                    setting: String::new(),
                    nudge: Some(cfg.nudge.clone()),
                },
            ],
            true,
        )
    }

    pub fn sweep(cfg: &RobustnessSweep) -> Result<Self> {
        let mut entries = vec![Entry {
            name: "bpf",
            setting: String::new(),
            nudge: None,
        }];
        let with = |operator: OperatorConfig| NudgeConfig {
            scheme: cfg.scheme,
            m: cfg.m,
            operator,
        };
        for &gamma in &cfg.gammas {
            entries.push(Entry {
                name: "nupf-gradient",
                setting: format!("gamma={gamma}"),
                nudge: Some(with(OperatorConfig {
                    kind: OperatorKind::Gradient,
                    gamma,
                    use_log: true,
                    ..OperatorConfig::default()
                })),
            });
        }
        for &s2 in &cfg.sigma2 {
            entries.push(Entry {
                name: "nupf-random-search",
                setting: format!("sigma2={s2}"),
                nudge: Some(with(OperatorConfig {
                    kind: OperatorKind::RandomSearch,
                    cov_scale: s2,
                    max_tries: cfg.max_tries,
                    ..OperatorConfig::default()
                })),
            });
        }
        Self::new(&cfg.model, cfg.b_offset, cfg.horizon, cfg.n.clone(), entries, false)
    }

    fn new(
        model: &Lorenz63Spec,
        b_offset: f64,
        horizon: usize,
        n: Vec<usize>,
        entries: Vec<Entry>,
        paths: bool,
    ) -> Result<Self> {
        let filter_model = Lorenz63Spec {
            b: model.b + b_offset,
            ..model.clone()
        };
        for e in &entries {
            for &k in &n {
                e.filter(k, 3)?;
            }
        }
        Ok(Self {
            truth: model.clone(),
            filter_model,
            observations: horizon / model.t_s,
            n,
            entries,
            paths,
        })
    }
}

impl Runner for L63Runner {
    fn run(&self, run: usize, stream: &RngStream) -> Result<RunOutput> {
        let truth = build_lorenz63::<f64>(&self.truth)?;
        let model = build_lorenz63::<f64>(&self.filter_model)?;
        let traj = simulate_from(
            &truth,
            self.truth.x0.to_vec(),
            self.observations,
            &stream.child(stage::TRUTH),
        );
        let x = traj.hidden_states();
        let mut out = RunOutput::default();
        let mut path = (self.paths && run == 0).then(|| {
            let mut t = path_table("path.csv", 3);
            push_path(&mut t, "truth", 0, x);
            t
        });
        for &n in &self.n {
            let fs = stream.child(stage::FILTERS).child(n as u64);
            for e in &self.entries {
                let filter = e.filter(n, 3)?;
                let (rec, fo) =
                    score_particle_filter(e.name, &e.setting, &filter, &model, &traj.observations, n, &fs, x, x)?;
                if let Some(t) = path.as_mut() {
                    push_path(t, e.name, n, &fo.means);
                }
                out.records.push(rec);
            }
        }
        out.tables.extend(path);
        Ok(out)
    }
}

pub(crate) struct L96BpfRunner {
    cfg: L96Bpf,
}

impl L96BpfRunner {
    pub fn new(cfg: &L96Bpf) -> Self {
        Self { cfg: cfg.clone() }
    }
}

impl Runner for L96BpfRunner {
    fn run(&self, _run: usize, stream: &RngStream) -> Result<RunOutput> {
        let model = build_lorenz96::<f64>(&self.cfg.model, &stream.child(stage::MODEL))?;
        let traj = simulate_from(
            &model,
            model.center().to_vec(),
            self.cfg.observations,
            &stream.child(stage::TRUTH),
        );
        let x = traj.hidden_states();
        let mut out = RunOutput::default();
        let d = self.cfg.model.d;
        for &n in &self.cfg.n {
            let fs = stream.child(stage::FILTERS).child(n as u64);
            let nupf = ParticleFilter::nudged(self.cfg.nudge.selector(n), self.cfg.nudge.operator.build(d)?);
            for filter in [ParticleFilter::Bootstrap, nupf] {
                let (rec, _) =
                    score_particle_filter(filter.name(), "", &filter, &model, &traj.observations, n, &fs, x, x)?;
                out.records.push(rec);
            }
        }
        Ok(out)
    }
}

pub(crate) struct L96EnkfRunner {
    cfg: L96Enkf,
}

impl L96EnkfRunner {
    pub fn new(cfg: &L96Enkf) -> Self {
        Self { cfg: cfg.clone() }
    }
}

impl Runner for L96EnkfRunner {
    fn run(&self, _run: usize, stream: &RngStream) -> Result<RunOutput> {
        let n = self.cfg.n;
        let mut out = RunOutput::default();
        for &d in &self.cfg.dims {
            let spec = Lorenz96Spec {
                d,
                ..self.cfg.model.clone()
            };
            let ds = stream.child(d as u64);
            let model = build_lorenz96::<f64>(&spec, &ds.child(stage::MODEL))?;
            let traj = simulate_from(
                &model,
                model.center().to_vec(),
                self.cfg.observations,
                &ds.child(stage::TRUTH),
            );
            let x = traj.hidden_states();
            let setting = format!("d={d}");
            let fs = ds.child(stage::FILTERS);
            let nupf = ParticleFilter::nudged(self.cfg.nudge.selector(n), self.cfg.nudge.operator.build(d)?);
            let (rec, _) = score_particle_filter("nupf", &setting, &nupf, &model, &traj.observations, n, &fs, x, x)?;
            out.records.push(rec);
            let (enkf, secs) = timed(|| Ok(run_enkf(&model, &traj.observations, n, &fs)?))?;
            let mut rec = RunRecord::new("enkf", n, setting);
            rec.nmse = Some(nmse_vs_reference(&enkf.means, x, x)?);
            rec.runtime_s = secs;
            out.records.push(rec);
        }
        Ok(out)
    }
}
