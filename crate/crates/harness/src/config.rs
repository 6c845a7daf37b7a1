//! Experiment configuration: a TOML file with the master seed, run count,
//! output directory and an `[experiment]` table selected by its `id` key.

use std::path::{Path, PathBuf};

use nupf_core::inference::{JitterKernel, ParamPrior, PmhConfig, SvParams};
use nupf_core::models::{LinearGaussianSpec, Lorenz63Spec, Lorenz96Spec, TrackingSpec};
use nupf_core::nudging::{NudgeConfig, OperatorConfig, OperatorKind, SelectionScheme};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Every experiment id, in listing order.
pub const EXPERIMENT_IDS: [&str; 10] = [
    "lg-optimal-compare",
    "lorenz63-misspec",
    "nudge-robustness-sweep",
    "tracking",
    "lorenz96-bpf",
    "lorenz96-enkf",
    "bias-ratio",
    "evidence-compare",
    "sv-npf",
    "sv-pmh",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; run `k` uses `run_seed(seed, k)`.
    pub seed: u64,
    pub runs: usize,
    /// Output directory. Falls back to `$NUPF_OUTPUT_DIR`, then `results/<id>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; the rayon default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Experiment {
    LgOptimalCompare(LgCompare),
    Lorenz63Misspec(L63Misspec),
    NudgeRobustnessSweep(RobustnessSweep),
    Tracking(TrackingExperiment),
    Lorenz96Bpf(L96Bpf),
    Lorenz96Enkf(L96Enkf),
    BiasRatio(BiasRatio),
    EvidenceCompare(EvidenceCompare),
    SvNpf(SvNpf),
    SvPmh(SvPmh),
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Self::LgOptimalCompare(_) => "lg-optimal-compare",
            Self::Lorenz63Misspec(_) => "lorenz63-misspec",
            Self::NudgeRobustnessSweep(_) => "nudge-robustness-sweep",
            Self::Tracking(_) => "tracking",
            Self::Lorenz96Bpf(_) => "lorenz96-bpf",
            Self::Lorenz96Enkf(_) => "lorenz96-enkf",
            Self::BiasRatio(_) => "bias-ratio",
            Self::EvidenceCompare(_) => "evidence-compare",
            Self::SvNpf(_) => "sv-npf",
            Self::SvPmh(_) => "sv-pmh",
        }
    }
}

fn gradient_nudge(scheme: SelectionScheme, gamma: f64, use_log: bool) -> NudgeConfig {
    NudgeConfig {
        scheme,
        m: None,
        operator: OperatorConfig {
            kind: OperatorKind::Gradient,
            gamma,
            use_log,
            ..OperatorConfig::default()
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LgFilter {
    OptimalPf,
    NupfPw,
    Bpf,
    Nupf,
}

/// High-dimensional linear-Gaussian model with random binary `C_t`; filters
/// are scored by overline-NMSE against the Kalman means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LgCompare {
    pub n: Vec<usize>,
    pub filters: Vec<LgFilter>,
    /// Mixing probability of the properly weighted filter; `1/√N` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pw_epsilon: Option<f64>,
    pub model: LinearGaussianSpec,
    pub nudge: NudgeConfig,
}

impl Default for LgCompare {
    fn default() -> Self {
        Self {
            n: vec![100],
            filters: vec![LgFilter::OptimalPf, LgFilter::NupfPw, LgFilter::Bpf, LgFilter::Nupf],
            pw_epsilon: None,
            model: LinearGaussianSpec::default(),
            nudge: gradient_nudge(SelectionScheme::Batch, 0.02, true),
        }
    }
}

/// Lorenz 63 filtered with a misspecified `b + b_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L63Misspec {
    pub n: Vec<usize>,
    /// Euler steps simulated (`t_f`); there are `horizon / t_s` observations.
    pub horizon: usize,
    pub b_offset: f64,
    pub model: Lorenz63Spec,
    pub nudge: NudgeConfig,
}

impl Default for L63Misspec {
    fn default() -> Self {
        Self {
            n: vec![10, 100, 500, 1000],
            horizon: 4000,
            b_offset: 0.75,
            model: Lorenz63Spec::default(),
            nudge: gradient_nudge(SelectionScheme::Independent, 0.75, true),
        }
    }
}

/// The misspecified Lorenz 63 setup over a grid of gradient step sizes and
/// random-search variances `σ²` (covariance `σ² I`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSweep {
    pub n: Vec<usize>,
    pub horizon: usize,
    pub b_offset: f64,
    pub gammas: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub scheme: SelectionScheme,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub max_tries: usize,
    pub model: Lorenz63Spec,
}

impl Default for RobustnessSweep {
    fn default() -> Self {
        Self {
            n: vec![500],
            horizon: 4000,
            b_offset: 0.75,
            gammas: vec![0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 2.0],
            sigma2: vec![0.01, 0.1, 0.5, 1.0, 2.0, 5.0],
            scheme: SelectionScheme::Independent,
            m: None,
            max_tries: 10,
            model: Lorenz63Spec::default(),
        }
    }
}

/// Target tracking with heavy-tailed sensor noise; the filters do not know
/// the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingExperiment {
    pub n: Vec<usize>,
    pub horizon: usize,
    pub model: TrackingSpec,
    pub nudge: NudgeConfig,
}

impl Default for TrackingExperiment {
    fn default() -> Self {
        let mut nudge = gradient_nudge(SelectionScheme::Batch, 5.5, true);
        nudge.operator.velocity_kappa = Some(0.04);
        Self {
            n: vec![500],
            horizon: 600,
            model: TrackingSpec::default(),
            nudge,
        }
    }
}

/// Lorenz 96, bootstrap against nudged filter over a grid of `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L96Bpf {
    pub n: Vec<usize>,
    /// Number of observations.
    pub observations: usize,
    pub model: Lorenz96Spec,
    pub nudge: NudgeConfig,
}

impl Default for L96Bpf {
    fn default() -> Self {
        Self {
            n: vec![50, 100, 200, 400, 800],
            observations: 100,
            model: Lorenz96Spec::default(),
            nudge: gradient_nudge(SelectionScheme::Batch, 0.075, true),
        }
    }
}

/// Lorenz 96, ensemble Kalman against nudged filter over a grid of
/// dimensions at fixed `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L96Enkf {
    pub n: usize,
    pub dims: Vec<usize>,
    pub observations: usize,
    pub model: Lorenz96Spec,
    pub nudge: NudgeConfig,
}

impl Default for L96Enkf {
    fn default() -> Self {
        Self {
            n: 500,
            dims: vec![10, 40, 100, 200],
            observations: 100,
            model: Lorenz96Spec::default(),
            nudge: gradient_nudge(SelectionScheme::Batch, 0.075, true),
        }
    }
}

/// Evidence ratios `Ẑ/Z*` on a 2-D linear-Gaussian model with one fixed
/// observation sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasRatio {
    pub n: Vec<usize>,
    pub horizon: usize,
    /// Seed of the fixed `C_t` and observation sequence.
    pub data_seed: u64,
    pub q: [[f64; 2]; 2],
    pub r: f64,
    pub c_density: f64,
    pub nudge: NudgeConfig,
}

impl Default for BiasRatio {
    fn default() -> Self {
        Self {
            n: vec![100, 1000],
            horizon: 100,
            data_seed: 2024,
            q: [[2.7, -0.48], [-0.48, 2.05]],
            r: 1.0,
            c_density: 0.5,
            nudge: gradient_nudge(SelectionScheme::Independent, 0.1, true),
        }
    }
}

/// Evidence of a scalar Gaussian random walk against the same model with the
/// observation-driven kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceCompare {
    pub n: usize,
    pub horizon: usize,
    pub data_seed: u64,
    pub q: f64,
    pub r: f64,
    /// Nudging probability of the observation-driven kernel.
    pub epsilon: f64,
    /// Log-gradient step; must not exceed `r`, the inverse Lipschitz constant
    /// of the log-likelihood gradient.
    pub gamma: f64,
    /// Steps are taken only where `|∇log g| ≥ threshold`.
    pub threshold: f64,
}

impl Default for EvidenceCompare {
    fn default() -> Self {
        Self {
            n: 100,
            horizon: 50,
            data_seed: 7,
            q: 1.0,
            r: 1.0,
            epsilon: 1.0,
            gamma: 0.5,
            threshold: 0.5,
        }
    }
}

/// Nudging in the inner filters of the stochastic volatility experiments.
/// Every key but `M` is required when the table is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvFilters {
    pub gamma: f64,
    pub use_log: bool,
    pub scheme: SelectionScheme,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

/// Nested particle filter with bootstrap and nudged inner filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvNpf {
    /// Price CSV (`date,price`); the bundled synthetic series when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prices: Option<PathBuf>,
    pub k: usize,
    pub n: usize,
    pub nudge: SvFilters,
    pub prior: ParamPrior,
    pub jitter: JitterKernel,
}

impl Default for SvNpf {
    fn default() -> Self {
        Self {
            prices: None,
            k: 50,
            n: 50,
            nudge: SvFilters {
                gamma: 4.0,
                use_log: false,
                scheme: SelectionScheme::Batch,
                m: None,
            },
            prior: ParamPrior::default(),
            jitter: JitterKernel::default(),
        }
    }
}

/// Particle Metropolis–Hastings with bootstrap and nudged estimators; each
/// run is one chain per filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvPmh {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prices: Option<PathBuf>,
    pub n: usize,
    pub iterations: usize,
    /// Fraction of each chain dropped before the autocorrelations.
    pub burn_in: f64,
    pub max_lag: usize,
    pub proposal_var: [f64; 3],
    pub initial: SvParams,
    pub nudge: SvFilters,
    pub prior: ParamPrior,
}

impl Default for SvPmh {
    fn default() -> Self {
        let pmh = PmhConfig::default();
        Self {
            prices: None,
            n: 100,
            iterations: pmh.iterations,
            burn_in: 0.1,
            max_lag: 100,
            proposal_var: pmh.proposal_var,
            initial: pmh.initial,
            nudge: SvFilters {
                gamma: 0.1,
                use_log: true,
                scheme: SelectionScheme::Batch,
                m: None,
            },
            prior: ParamPrior::default(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale default for `id`.
    pub fn default_for(id: &str) -> Result<Self> {
        let (runs, experiment) = match id {
            "lg-optimal-compare" => (100, Experiment::LgOptimalCompare(LgCompare::default())),
            "lorenz63-misspec" => (100, Experiment::Lorenz63Misspec(L63Misspec::default())),
            "nudge-robustness-sweep" => (20, Experiment::NudgeRobustnessSweep(RobustnessSweep::default())),
            "tracking" => (100, Experiment::Tracking(TrackingExperiment::default())),
            "lorenz96-bpf" => (50, Experiment::Lorenz96Bpf(L96Bpf::default())),
            "lorenz96-enkf" => (20, Experiment::Lorenz96Enkf(L96Enkf::default())),
            "bias-ratio" => (2000, Experiment::BiasRatio(BiasRatio::default())),
            "evidence-compare" => (500, Experiment::EvidenceCompare(EvidenceCompare::default())),
            "sv-npf" => (100, Experiment::SvNpf(SvNpf::default())),
            "sv-pmh" => (20, Experiment::SvPmh(SvPmh::default())),
            other => return Err(HarnessError::UnknownExperiment(other.to_string())),
        };
        Ok(Self {
            seed: 1,
            runs,
            output: None,
            threads: None,
            experiment,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string(), e.span()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| e.in_file(path, &text))?;
        // Relative price paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        let prices = match &mut cfg.experiment {
            Experiment::SvNpf(e) => e.prices.as_mut(),
            Experiment::SvPmh(e) => e.prices.as_mut(),
            _ => None,
        };
        if let Some(p) = prices {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string(), None))
    }

    /// Structural checks beyond what deserialization enforces. Nudging
    /// budgets outside the rate regime only warn.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::InvalidConfig(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        let check_n = |ns: &[usize], nudge: Option<&NudgeConfig>| -> Result<()> {
            if ns.is_empty() || ns.contains(&0) {
                return Err(HarnessError::InvalidConfig(
                    "n must be a non-empty list of positive sizes".into(),
                ));
            }
            if let Some(nudge) = nudge {
                for &n in ns {
                    if nudge.budget(n) > n {
                        return Err(HarnessError::InvalidConfig(format!("nudging budget M exceeds N = {n}")));
                    }
                    nudge.rate_status(n);
                }
            }
            Ok(())
        };
        match &self.experiment {
            Experiment::LgOptimalCompare(e) => {
                check_n(&e.n, Some(&e.nudge))?;
                e.model.validate()?;
                if e.filters.is_empty() {
                    return bad("filters must not be empty".into());
                }
            }
            Experiment::Lorenz63Misspec(e) => {
                check_n(&e.n, Some(&e.nudge))?;
                e.model.validate()?;
                if e.horizon < e.model.t_s {
                    return bad("horizon must cover at least one observation".into());
                }
            }
            Experiment::NudgeRobustnessSweep(e) => {
                check_n(&e.n, None)?;
                e.model.validate()?;
                if e.horizon < e.model.t_s {
                    return bad("horizon must cover at least one observation".into());
                }
                if e.gammas.iter().chain(&e.sigma2).any(|v| !(*v >= 0.0)) {
                    return bad("gammas and sigma2 must be non-negative".into());
                }
            }
            Experiment::Tracking(e) => {
                check_n(&e.n, Some(&e.nudge))?;
                e.model.validate()?;
                if e.horizon == 0 {
                    return bad("horizon must be at least 1".into());
                }
            }
            Experiment::Lorenz96Bpf(e) => {
                check_n(&e.n, Some(&e.nudge))?;
                e.model.validate()?;
                if e.observations == 0 {
                    return bad("observations must be at least 1".into());
                }
            }
            Experiment::Lorenz96Enkf(e) => {
                check_n(&[e.n], Some(&e.nudge))?;
                if e.n < 2 {
                    return bad("the ensemble Kalman filter needs n >= 2".into());
                }
                if e.dims.is_empty() {
                    return bad("dims must not be empty".into());
                }
                for &d in &e.dims {
                    Lorenz96Spec { d, ..e.model.clone() }.validate()?;
                }
            }
            Experiment::BiasRatio(e) => {
                check_n(&e.n, Some(&e.nudge))?;
                if e.horizon == 0 || !(e.r > 0.0) || !(0.0..=1.0).contains(&e.c_density) {
                    return bad("bias-ratio needs horizon >= 1, r > 0 and c_density in [0, 1]".into());
                }
            }
            Experiment::EvidenceCompare(e) => {
                check_n(&[e.n], None)?;
                if !(e.q > 0.0) || !(e.r > 0.0) || e.horizon == 0 {
                    return bad("evidence-compare needs q > 0, r > 0 and horizon >= 1".into());
                }
                if !(0.0..=1.0).contains(&e.epsilon) {
                    return bad("epsilon must lie in [0, 1]".into());
                }
                if !(e.gamma >= 0.0) || e.gamma > e.r {
                    return bad(format!(
                        "gamma = {} must lie in [0, r] = [0, {}] (inverse Lipschitz constant of the log-likelihood gradient)",
                        e.gamma, e.r
                    ));
                }
                if !(e.threshold >= 0.0) {
                    return bad("threshold must be non-negative".into());
                }
            }
            Experiment::SvNpf(e) => {
                check_n(&[e.n, e.k], None)?;
                e.prior.validate()?;
                e.jitter.validate()?;
                sv_nudge(&e.nudge).rate_status(e.n);
            }
            Experiment::SvPmh(e) => {
                check_n(&[e.n], None)?;
                e.prior.validate()?;
                self.pmh_config()?;
                if !(0.0..1.0).contains(&e.burn_in) {
                    return bad("burn_in must lie in [0, 1)".into());
                }
                sv_nudge(&e.nudge).rate_status(e.n);
            }
        }
        Ok(())
    }

    pub(crate) fn pmh_config(&self) -> Result<PmhConfig> {
        let Experiment::SvPmh(e) = &self.experiment else {
            return Err(HarnessError::InvalidConfig("not a pMH experiment".into()));
        };
        let cfg = PmhConfig {
            iterations: e.iterations,
            proposal_var: e.proposal_var,
            initial: e.initial,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Nudge configuration of an SV inner filter.
pub(crate) fn sv_nudge(f: &SvFilters) -> NudgeConfig {
    NudgeConfig {
        scheme: f.scheme,
        m: f.m,
        operator: OperatorConfig {
            kind: OperatorKind::Gradient,
            gamma: f.gamma,
            use_log: f.use_log,
            ..OperatorConfig::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_default_round_trips() {
        for id in EXPERIMENT_IDS {
            let cfg = ExperimentConfig::default_for(id).unwrap();
            assert_eq!(cfg.experiment.id(), id);
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg, "{id}");
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn lg_default_values() {
        let cfg = ExperimentConfig::default_for("lg-optimal-compare").unwrap();
        let Experiment::LgOptimalCompare(e) = cfg.experiment else {
            unreachable!()
        };
        assert_eq!((e.model.d_x, e.model.d_y), (100, 20));
        assert_eq!(e.n, vec![100]);
        assert_eq!(e.nudge.operator.gamma, 0.02);
        assert_eq!(e.model.q, 0.1);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "seed = 1\nruns = 2\n[experiment]\nid = \"bias-ratio\"\nhorizonn = 3\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("horizonn"), "{err}");
        let text = "seed = 1\nruns = 2\nsede = 4\n[experiment]\nid = \"bias-ratio\"\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
    }

    #[test]
    fn unknown_id_is_rejected() {
        let text = "seed = 1\nruns = 2\n[experiment]\nid = \"lorenz99\"\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("lorenz99"), "{err}");
    }

    #[test]
    fn partial_tables_take_defaults() {
        let text = "seed = 3\nruns = 4\n[experiment]\nid = \"lorenz63-misspec\"\nn = [50]\n[experiment.nudge.operator]\ngamma = 0.5\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let Experiment::Lorenz63Misspec(e) = cfg.experiment else {
            unreachable!()
        };
        assert_eq!(e.n, vec![50]);
        assert_eq!(e.nudge.operator.gamma, 0.5);
        assert_eq!(e.b_offset, 0.75);
        assert_eq!(e.model.t_s, 40);
    }

    #[test]
    fn evidence_gamma_above_inverse_lipschitz_rejected() {
        let mut cfg = ExperimentConfig::default_for("evidence-compare").unwrap();
        if let Experiment::EvidenceCompare(e) = &mut cfg.experiment {
            e.gamma = 2.0;
        }
        assert!(cfg.validate().is_err());
    }
}
