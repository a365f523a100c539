//! Run orchestration: artifact store, run records, a FIFO run executor and
//! the per-service model registry.

mod executor;
mod record;
mod registry;
mod steps;
mod store;

use thiserror::Error;

use crate::config::ConfigError;
use crate::evaluate::EvalError;
use crate::ingest::IngestError;
use crate::neural::NeuralError;
use crate::tune::TuneError;

pub use executor::Orchestrator;
pub use record::{RunRecord, RunStatus, Step, StepRecord, StepStatus};
pub use registry::{Registry, Service, VersionInfo, ACTIVE_FILE};
pub use steps::{check_dependencies, execute_step, RunPaths};
pub use store::{write_atomic, ArtifactStore, RUN_FILE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestrateError {
    #[error("run `{0}` not found")]
    NotFound(String),
    #[error("{step} requires missing artifact `{dependency}`")]
    MissingArtifact { step: String, dependency: String },
    #[error("no steps requested")]
    NoSteps,
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("checkpoint does not fit service `{service}`: {reason}")]
    TaskMismatch { service: String, reason: String },
    #[error("run executor has shut down")]
    Shutdown,
    #[error("timed out waiting for run `{0}`")]
    Timeout(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Tune(#[from] TuneError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

impl OrchestrateError {
    pub(crate) fn missing(step: Step, dependency: &str) -> Self {
        Self::MissingArtifact {
            step: step.to_string(),
            dependency: dependency.to_string(),
        }
    }
}

pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> OrchestrateError + '_ {
    move |e| OrchestrateError::Io(format!("{}: {e}", path.display()))
}
