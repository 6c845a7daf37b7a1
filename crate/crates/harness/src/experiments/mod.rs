//! Seeded batch execution of the configured experiment.
//!
//! Runs are independent: run `k` draws everything from
//! `RngStream::new(run_seed(seed, k))`. Results are collected by run index,
//! so every CSV except `timing.csv` and `wall_clock.csv` is byte-identical
//! across thread counts.

mod bias;
mod chaotic;
mod evidence;
mod lg;
mod stochvol;
mod tracking;

use std::path::{Path, PathBuf};
use std::time::Instant;

use nupf_core::rng::run_seed;
use nupf_core::RngStream;
use rayon::prelude::*;

pub use bias::bias_model;
pub use evidence::{evidence_compare, scalar_random_walk, EvidenceComparison, EvidenceNudge};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::io::{fmt_f64, fmt_opt, Table};
use crate::metrics::{mean, std_dev};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "NUPF_OUTPUT_DIR";

/// Substream labels for the parts of one run.
pub(crate) mod stage {
    pub const MODEL: u64 = 1;
    pub const TRUTH: u64 = 2;
    pub const FILTERS: u64 = 3;
}

/// One filter's result in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub filter: String,
    /// Particles (or ensemble members); 0 for the Gaussian filters.
    pub n: usize,
    /// Grid point label, e.g. `gamma=0.5`; empty when the experiment has no
    /// grid.
    pub setting: String,
    pub nmse: Option<f64>,
    pub log_evidence: Option<f64>,
    /// Experiment-specific value (evidence ratio, acceptance rate, …).
    pub aux: Option<f64>,
    pub degenerate_steps: usize,
    /// Wall-clock seconds spent in the filter.
    pub runtime_s: f64,
}

impl RunRecord {
    pub(crate) fn new(filter: impl Into<String>, n: usize, setting: impl Into<String>) -> Self {
        Self {
            run: 0,
            seed: 0,
            filter: filter.into(),
            n,
            setting: setting.into(),
            nmse: None,
            log_evidence: None,
            aux: None,
            degenerate_steps: 0,
            runtime_s: 0.0,
        }
    }
}

/// Records and extra tables of one run.
#[derive(Debug, Default)]
pub(crate) struct RunOutput {
    pub records: Vec<RunRecord>,
    pub tables: Vec<Table>,
}

/// One experiment's per-run work plus optional post-processing.
pub(crate) trait Runner: Sync {
    fn run(&self, run: usize, stream: &RngStream) -> Result<RunOutput>;

    fn finish(&self, _records: &[RunRecord], _tables: &mut Vec<Table>) {}
}

pub(crate) fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

/// Everything an experiment produced.
#[derive(Debug)]
pub struct ExperimentResult {
    pub id: &'static str,
    pub config: ExperimentConfig,
    /// Ordered by run, then by the order filters ran within the run.
    pub records: Vec<RunRecord>,
    pub tables: Vec<Table>,
    /// Wall-clock seconds of the run loop.
    pub wall_clock_s: f64,
    pub threads: usize,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let runner: Box<dyn Runner> = match &config.experiment {
        Experiment::LgOptimalCompare(e) => Box::new(lg::LgRunner::new(e)?),
        Experiment::Lorenz63Misspec(e) => Box::new(chaotic::L63Runner::misspec(e)?),
        Experiment::NudgeRobustnessSweep(e) => Box::new(chaotic::L63Runner::sweep(e)?),
        Experiment::Tracking(e) => Box::new(tracking::TrackingRunner::new(e)?),
        Experiment::Lorenz96Bpf(e) => Box::new(chaotic::L96BpfRunner::new(e)),
        Experiment::Lorenz96Enkf(e) => Box::new(chaotic::L96EnkfRunner::new(e)),
        Experiment::BiasRatio(e) => Box::new(bias::BiasRunner::new(e)?),
        Experiment::EvidenceCompare(e) => Box::new(evidence::EvidenceRunner::new(e)?),
        Experiment::SvNpf(e) => Box::new(stochvol::NpfRunner::new(e)?),
        Experiment::SvPmh(e) => Box::new(stochvol::PmhRunner::new(e, config.pmh_config()?)?),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::InvalidConfig(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    log::info!("{}: {} runs on {threads} threads", config.experiment.id(), config.runs);

    let start = Instant::now();
    let outputs: Vec<RunOutput> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|k| {
                let seed = run_seed(config.seed, k as u64);
                let mut out = runner.run(k, &RngStream::new(seed))?;
                for r in &mut out.records {
                    r.run = k;
                    r.seed = seed;
                }
                log::debug!("run {k} done");
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let wall_clock_s = start.elapsed().as_secs_f64();

    let mut records = Vec::new();
    let mut tables: Vec<Table> = Vec::new();
    for out in outputs {
        records.extend(out.records);
        for t in out.tables {
            match tables.iter_mut().find(|x| x.name == t.name) {
                Some(x) => x.rows.extend(t.rows),
                None => tables.push(t),
            }
        }
    }
    runner.finish(&records, &mut tables);
    Ok(ExperimentResult {
        id: config.experiment.id(),
        config: config.clone(),
        records,
        tables,
        wall_clock_s,
        threads,
    })
}

/// Where results go: the config's `output`, else `$NUPF_OUTPUT_DIR/<id>`,
/// else `results/<id>`.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = &config.output {
        return p.clone();
    }
    let root = std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from);
    root.join(config.experiment.id())
}

pub const RUNS_HEADER: [&str; 9] = [
    "run",
    "seed",
    "filter",
    "n",
    "setting",
    "nmse",
    "log_evidence",
    "aux",
    "degenerate_steps",
];

pub const SUMMARY_HEADER: [&str; 11] = [
    "filter",
    "n",
    "setting",
    "runs",
    "nmse_mean",
    "nmse_sd",
    "log_evidence_mean",
    "log_evidence_sd",
    "aux_mean",
    "aux_sd",
    "degenerate_steps",
];

fn stats(values: impl Iterator<Item = Option<f64>>) -> [String; 2] {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return [String::new(), String::new()];
    }
    [fmt_f64(mean(&v)), fmt_f64(std_dev(&v))]
}

impl ExperimentResult {
    /// Records of `filter` at `n` and `setting`, in run order.
    pub fn select<'a>(
        &'a self,
        filter: &'a str,
        n: usize,
        setting: &'a str,
    ) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.filter == filter && r.n == n && r.setting == setting)
    }

    /// `(filter, n, setting)` groups in order of first appearance.
    pub fn groups(&self) -> Vec<(String, usize, String)> {
        let mut g: Vec<(String, usize, String)> = Vec::new();
        for r in &self.records {
            if !g.iter().any(|(f, n, s)| *f == r.filter && *n == r.n && *s == r.setting) {
                g.push((r.filter.clone(), r.n, r.setting.clone()));
            }
        }
        g
    }

    pub fn runs_table(&self) -> Table {
        let mut t = Table::new("runs.csv", &RUNS_HEADER);
        for r in &self.records {
            t.push(vec![
                r.run.to_string(),
                r.seed.to_string(),
                r.filter.clone(),
                r.n.to_string(),
                r.setting.clone(),
                fmt_opt(r.nmse),
                fmt_opt(r.log_evidence),
                fmt_opt(r.aux),
                r.degenerate_steps.to_string(),
            ]);
        }
        t
    }

    /// Mean and standard deviation per filter, `N` and setting.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new("summary.csv", &SUMMARY_HEADER);
        for (filter, n, setting) in self.groups() {
            let rs: Vec<&RunRecord> = self.select(&filter, n, &setting).collect();
            let [nm, ns] = stats(rs.iter().map(|r| r.nmse));
            let [em, es] = stats(rs.iter().map(|r| r.log_evidence));
            let [am, asd] = stats(rs.iter().map(|r| r.aux));
            t.push(vec![
                filter.clone(),
                n.to_string(),
                setting.clone(),
                rs.len().to_string(),
                nm,
                ns,
                em,
                es,
                am,
                asd,
                rs.iter().map(|r| r.degenerate_steps).sum::<usize>().to_string(),
            ]);
        }
        t
    }

    /// Per-run runtimes and runtime × NMSE.
    pub fn timing_table(&self) -> Table {
        let mut t = Table::new(
            "timing.csv",
            &["run", "filter", "n", "setting", "runtime_s", "runtime_x_nmse"],
        );
        for r in &self.records {
            t.push(vec![
                r.run.to_string(),
                r.filter.clone(),
                r.n.to_string(),
                r.setting.clone(),
                fmt_f64(r.runtime_s),
                fmt_opt(r.nmse.map(|v| v * r.runtime_s)),
            ]);
        }
        t
    }

    pub fn total_filter_runtime(&self) -> f64 {
        self.records.iter().map(|r| r.runtime_s).sum()
    }

    /// Write `runs.csv`, `summary.csv`, `timing.csv`, `wall_clock.csv`, the
    /// experiment's extra tables and the resolved `config.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        self.runs_table().write(dir)?;
        self.summary_table().write(dir)?;
        self.timing_table().write(dir)?;
        let mut wall = Table::new("wall_clock.csv", &["threads", "wall_clock_s", "filter_runtime_s"]);
        wall.push(vec![
            self.threads.to_string(),
            fmt_f64(self.wall_clock_s),
            fmt_f64(self.total_filter_runtime()),
        ]);
        wall.write(dir)?;
        for t in &self.tables {
            t.write(dir)?;
        }
        let cfg = dir.join("config.toml");
        std::fs::write(&cfg, self.config.to_toml()?).map_err(|e| HarnessError::io(&cfg, e))
    }
}

/// Rows `series,n,t,x1..xd` of a state path, for sample-path plots.
pub(crate) fn path_table(name: &str, d: usize) -> Table {
    let mut header = vec!["series".to_string(), "n".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    Table {
        name: name.to_string(),
        header,
        rows: Vec::new(),
    }
}

pub(crate) fn push_path(table: &mut Table, series: &str, n: usize, states: &[Vec<f64>]) {
    for (t, x) in states.iter().enumerate() {
        let mut row = vec![series.to_string(), n.to_string(), (t + 1).to_string()];
        row.extend(x.iter().map(|&v| fmt_f64(v)));
        table.push(row);
    }
}

/// Run a particle filter and score its means against `reference` (with
/// `truth` in the NMSE denominator).
#[allow(clippy::too_many_arguments)]
pub(crate) fn score_particle_filter<M: nupf_core::StateSpaceModel<f64> + ?Sized>(
    name: &str,
    setting: &str,
    filter: &nupf_core::ParticleFilter64,
    model: &M,
    observations: &[nupf_core::Observation64],
    n: usize,
    stream: &RngStream,
    reference: &[Vec<f64>],
    truth: &[Vec<f64>],
) -> Result<(RunRecord, nupf_core::FilterOutput64)> {
    let (out, secs) = timed(|| {
        Ok(nupf_core::filters::run_particle_filter(
            filter,
            model,
            observations,
            n,
            stream,
        )?)
    })?;
    let mut rec = RunRecord::new(name, n, setting);
    rec.nmse = Some(crate::metrics::nmse_vs_reference(&out.means, reference, truth)?);
    rec.log_evidence = Some(out.log_evidence());
    rec.degenerate_steps = out.degenerate_steps;
    rec.runtime_s = secs;
    Ok((rec, out))
}
