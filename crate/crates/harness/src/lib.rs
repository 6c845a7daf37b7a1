//! Experiment harness for the nudged particle filter library: TOML
//! configuration, seeded parallel runs, error metrics and CSV output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;

pub use config::{Experiment, ExperimentConfig, EXPERIMENT_IDS};
pub use error::{HarnessError, Result};
pub use experiments::{
    bias_model, evidence_compare, output_dir, run_experiment, scalar_random_walk, EvidenceComparison, EvidenceNudge,
    ExperimentResult, RunRecord, OUTPUT_ENV,
};
pub use io::csv_write;
pub use metrics::nmse_vs_reference;
