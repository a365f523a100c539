//! Classification and regression metrics, study summaries and report files.

mod importance;
mod metrics;
mod report;

use thiserror::Error;

use crate::neural::NeuralError;

pub use importance::{
    average_ranks, optimization_history, param_importance, spearman, HistoryPoint, ParamImportance, PARAM_NAMES,
};
pub use metrics::{
    classification_metrics, confusion_matrix, regression_metrics, ClassificationMetrics, ConfusionMatrix,
    RegressionMetrics,
};
pub use report::{
    classification_report, confusion_file_name, evaluate_model, load_report, regression_report, write_reports,
    ClassificationReport, EvaluationReport, HpoReport, MacroAverage, RegressionReport, TargetClassification,
    TargetRegression, DECISION_THRESHOLD, HISTORY_FILE, IMPORTANCE_FILE, METRICS_FILE, METRICS_SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("length mismatch: {predictions} predictions vs {truth} truth values")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}
