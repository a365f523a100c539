use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Step {
    Ingestion,
    Training,
    Evaluation,
}

impl Step {
    pub const ALL: [Step; 3] = [Step::Ingestion, Step::Training, Step::Evaluation];
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step::Ingestion => "Ingestion",
            Step::Training => "Training",
            Step::Evaluation => "Evaluation",
        })
    }
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ingestion" | "ingest" => Ok(Step::Ingestion),
            "training" | "train" => Ok(Step::Training),
            "evaluation" | "evaluate" | "eval" => Ok(Step::Evaluation),
            _ => Err(format!("unknown step `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Succeeded | RunStatus::Failed)
    }

    /// Queued → Running → Succeeded | Failed. A queued run may also fail
    /// outright when the executor cannot start it.
    pub fn can_become(self, next: RunStatus) -> bool {
        use RunStatus::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Failed) | (Running, Succeeded) | (Running, Failed)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: Step,
    pub status: StepStatus,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    /// Files and directories the step produced.
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub steps: Vec<Step>,
    pub status: RunStatus,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub step_records: Vec<StepRecord>,
    pub error: Option<String>,
    /// The validated config, with `authorization` removed.
    pub config: RunConfig,
}

impl RunRecord {
    pub fn new(run_id: String, steps: Vec<Step>, config: &RunConfig, now: DateTime<Utc>) -> Self {
        let mut config = config.clone();
        config.authorization = config.authorization.map(|_| "<redacted>".into());
        Self {
            step_records: steps
                .iter()
                .map(|&step| StepRecord {
                    step,
                    status: StepStatus::Pending,
                    started_at: None,
                    finished_at: None,
                    artifacts: Vec::new(),
                    error: None,
                })
                .collect(),
            run_id,
            steps,
            status: RunStatus::Queued,
            created_at: now,
            started_at: None,
            finished_at: None,
            error: None,
            config,
        }
    }

    /// Latest timestamp recorded so far, so new stamps never go backwards.
    pub fn last_timestamp(&self) -> DateTime<Utc> {
        let steps = self.step_records.iter().flat_map(|s| [s.started_at, s.finished_at]);
        [self.started_at, self.finished_at]
            .into_iter()
            .chain(steps)
            .flatten()
            .fold(self.created_at, DateTime::max)
    }

    pub fn now(&self) -> DateTime<Utc> {
        Utc::now().max(self.last_timestamp())
    }

    pub fn step_mut(&mut self, step: Step) -> Option<&mut StepRecord> {
        self.step_records.iter_mut().find(|s| s.step == step)
    }

    pub fn step(&self, step: Step) -> Option<&StepRecord> {
        self.step_records.iter().find(|s| s.step == step)
    }
}
