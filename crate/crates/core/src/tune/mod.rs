//! Random-search hyperparameter study with median pruning and early
//! stopping.

mod pruning;
mod space;
mod study;

use thiserror::Error;

use crate::neural::NeuralError;

pub use pruning::{early_stop, median, should_prune};
pub use space::{sample_params, SearchSpace, TrialParams};
pub use study::{
    best_trial, run_study, Study, StudyOptions, StudyOutcome, TrialRecord, TrialState, TrialTiming,
    STUDY_FILE, TIMING_FILE, TRIALS_TABLE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuneError {
    #[error("no trial completed")]
    NoCompleteTrial,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("training or validation partition is empty")]
    EmptyData,
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}
