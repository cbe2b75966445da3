//! Experiment orchestration: configuration, training runs, metrics, rate CDFs and signaling cost.

mod config;
mod eval;
mod selftest;
mod signaling;
mod train;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, Profile, Variant, KEYS};
pub use eval::{cdf_csv, check_compatible, run_cdf_eval, write_cdf, RateSamples};
pub use selftest::{selftest, CheckResult};
pub use signaling::{signaling_bits, SchemeKind, SignalingScheme};
pub use train::{
    average_rows, config_tensors, metrics_csv, run_training, stream_rng, train_run, train_runs,
    write_report, MetricsRow, RunResult, Stream, TrainingReport, METRICS_HEADER,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::agent::AgentError;
use crate::baselines::BaselineError;
use crate::env::EnvError;
use crate::nnet::NnError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint does not match configuration: {0}")]
    CheckpointMismatch(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
}
