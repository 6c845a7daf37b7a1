use nupf_core::filters::{kalman_filter, ParticleFilter};
use nupf_core::linalg::Matrix;
use nupf_core::models::{build_linear_gaussian, simulate, LinearGaussian, LinearGaussianSpec};
use nupf_core::{Observation64, RngStream};

use super::{score_particle_filter, stage, RunOutput, RunRecord, Runner};
use crate::config::BiasRatio;
use crate::error::Result;
use crate::io::{fmt_f64, Table};

/// `x_t ~ N(x_{t−1}, Q)` in two dimensions with `x_0 ~ N(0, I)` and scalar
/// observations `y_t ~ N(C_t x_t, r)`, where the 1×2 matrices `C_t` have
/// Bernoulli(`c_density`) entries drawn from `stream`.
pub fn bias_model(
    q: [[f64; 2]; 2],
    r: f64,
    c_density: f64,
    horizon: usize,
    stream: &RngStream,
) -> Result<LinearGaussian<f64>> {
    let spec = LinearGaussianSpec {
        d_x: 2,
        d_y: 1,
        q: 1.0,
        r,
        time_varying: true,
        horizon,
        c_density,
    };
    let base = build_linear_gaussian::<f64>(&spec, stream)?;
    let q = Matrix::from_f64_rows(&[&q[0], &q[1]])?;
    Ok(LinearGaussian::new(
        vec![0.0; 2],
        Matrix::identity(2),
        q,
        base.c_sequence().to_vec(),
        vec![r],
    )?)
}

/// Evidence ratios against the exact evidence on one fixed data set.
pub(crate) struct BiasRunner {
    cfg: BiasRatio,
    model: LinearGaussian<f64>,
    observations: Vec<Observation64>,
    truth: Vec<Vec<f64>>,
    kalman_means: Vec<Vec<f64>>,
    log_z_star: f64,
}

impl BiasRunner {
    pub fn new(cfg: &BiasRatio) -> Result<Self> {
        let data = RngStream::new(cfg.data_seed);
        let model = bias_model(cfg.q, cfg.r, cfg.c_density, cfg.horizon, &data.child(stage::MODEL))?;
        let traj = simulate(&model, cfg.horizon, &data.child(stage::TRUTH));
        let kalman = kalman_filter(&model, &traj.observations)?;
        cfg.nudge.operator.build::<f64>(2)?;
        Ok(Self {
            cfg: cfg.clone(),
            truth: traj.hidden_states().to_vec(),
            observations: traj.observations,
            log_z_star: kalman.log_evidence(),
            kalman_means: kalman.means,
            model,
        })
    }
}

impl Runner for BiasRunner {
    fn run(&self, _run: usize, stream: &RngStream) -> Result<RunOutput> {
        let mut out = RunOutput::default();
        for &n in &self.cfg.n {
            let fs = stream.child(stage::FILTERS).child(n as u64);
            let nupf = ParticleFilter::nudged(self.cfg.nudge.selector(n), self.cfg.nudge.operator.build(2)?);
            for filter in [ParticleFilter::Bootstrap, nupf] {
                let (mut rec, fo) = score_particle_filter(
                    filter.name(),
                    "",
                    &filter,
                    &self.model,
                    &self.observations,
                    n,
                    &fs,
                    &self.kalman_means,
                    &self.truth,
                )?;
                rec.aux = Some((fo.log_evidence() - self.log_z_star).exp());
                out.records.push(rec);
            }
        }
        Ok(out)
    }

    /// Running means `(1/k) Σ_{j≤k} Ẑ_j / Z*` per filter and `N`.
    fn finish(&self, records: &[RunRecord], tables: &mut Vec<Table>) {
        let mut t = Table::new("running_means.csv", &["filter", "n", "k", "running_mean_ratio"]);
        for &n in &self.cfg.n {
            for name in ["bpf", "nupf"] {
                let mut sum = 0.0;
                let ratios = records
                    .iter()
                    .filter(|r| r.filter == name && r.n == n)
                    .filter_map(|r| r.aux);
                for (k, ratio) in ratios.enumerate() {
                    sum += ratio;
                    t.push(vec![
                        name.into(),
                        n.to_string(),
                        (k + 1).to_string(),
                        fmt_f64(sum / (k + 1) as f64),
                    ]);
                }
            }
        }
        let mut z = Table::new("log_z_star.csv", &["log_z_star"]);
        z.push(vec![fmt_f64(self.log_z_star)]);
        tables.push(t);
        tables.push(z);
    }
}
