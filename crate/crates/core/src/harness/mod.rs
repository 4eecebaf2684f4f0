//! Training loops, evaluation matches, metrics and checkpoints.
//!
//! A run pits two [`Controller`]s against each other: the agent on the Left and
//! the opponent on the Right. Controllers always act in the Left frame; the
//! Right team receives mirrored states and its actions are mirrored back.

mod config;
mod controller;
mod eval;
mod metrics;
mod persist;
mod runner;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{AgentSpec, Protocol, TrainConfig};
pub use controller::{Controller, StepStats, EVAL_EPSILON};
pub use eval::{evaluate, MatchReport};
pub use metrics::{export_metrics, load_metrics, read_metrics, write_metrics, GoalWindow, MetricsRow, METRICS_HEADER};
pub use persist::{
    load_model, load_resume, save_checkpoint, save_model, ModelManifest, MANIFEST_FILE, RESUME_FILE,
};
pub use runner::{adversarial_train, export_trace, play_step, resume, train, RunMode, Runner, StepRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Dqn(#[from] crate::dqn::DqnError),
    #[error(transparent)]
    Coma(#[from] crate::coma::ComaError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("metrics file: {0}")]
    Csv(#[from] csv::Error),
    #[error("resume state: {0}")]
    Bincode(#[from] bincode::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("training failed at timestep {timestep}: {source} (diagnostic checkpoint in {})", checkpoint.display())]
    Aborted { timestep: u64, source: Box<HarnessError>, checkpoint: PathBuf },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}
