use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::importance::{optimization_history, param_importance, HistoryPoint, ParamImportance};
use super::metrics::{
    classification_metrics, confusion_matrix, regression_metrics, ClassificationMetrics, ConfusionMatrix,
    RegressionMetrics,
};
use super::EvalError;
use crate::domain::Task;
use crate::ingest::{Matrices, ScalerSet};
use crate::neural::MlpModel;
use crate::tune::{best_trial, Study, TrialParams};

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const METRICS_FILE: &str = "metrics.json";
pub const HISTORY_FILE: &str = "optimization_history.csv";
pub const IMPORTANCE_FILE: &str = "param_importance.csv";
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetClassification {
    pub target: String,
    #[serde(flatten)]
    pub metrics: ClassificationMetrics,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub targets: Vec<TargetClassification>,
    pub macro_avg: MacroAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRegression {
    pub target: String,
    #[serde(flatten)]
    pub metrics: RegressionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub targets: Vec<TargetRegression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoReport {
    pub optimization_history: Vec<HistoryPoint>,
    pub parameter_importance: ParamImportance,
    pub best_trial_number: Option<usize>,
    pub best_params: Option<TrialParams>,
}

impl HpoReport {
    pub fn from_study(study: &Study) -> Self {
        let best = best_trial(study).ok();
        Self {
            optimization_history: optimization_history(study),
            parameter_importance: param_importance(study),
            best_trial_number: best.map(|t| t.number),
            best_params: best.map(|t| t.params.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub task: Task,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hpo: Option<HpoReport>,
}

pub fn classification_report(
    target_names: &[String],
    predicted: &[Vec<bool>],
    truth: &[Vec<bool>],
) -> Result<ClassificationReport, EvalError> {
    let mut targets = Vec::with_capacity(target_names.len());
    for (j, name) in target_names.iter().enumerate() {
        let p: Vec<bool> = predicted.iter().map(|r| r[j]).collect();
        let t: Vec<bool> = truth.iter().map(|r| r[j]).collect();
        let confusion = confusion_matrix(&p, &t)?;
        targets.push(TargetClassification {
            target: name.clone(),
            metrics: classification_metrics(&confusion),
            confusion,
        });
    }
    let k = targets.len().max(1) as f64;
    let avg = |f: fn(&ClassificationMetrics) -> f64| targets.iter().map(|t| f(&t.metrics)).sum::<f64>() / k;
    let macro_avg = MacroAverage {
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
    };
    Ok(ClassificationReport { targets, macro_avg })
}

pub fn regression_report(
    target_names: &[String],
    predicted: &[Vec<f64>],
    truth: &[Vec<f64>],
) -> Result<RegressionReport, EvalError> {
    let targets = target_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let p: Vec<f64> = predicted.iter().map(|r| r[j]).collect();
            let t: Vec<f64> = truth.iter().map(|r| r[j]).collect();
            Ok(TargetRegression {
                target: name.clone(),
                metrics: regression_metrics(&p, &t)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(RegressionReport { targets })
}

/// Scores `model` on a held-out partition. Classifier outputs are
/// thresholded at 0.5; regressor outputs and truths are mapped back to raw
/// units before scoring.
pub fn evaluate_model(
    model: &MlpModel,
    scalers: &ScalerSet,
    data: &Matrices,
    study: Option<&Study>,
) -> Result<EvaluationReport, EvalError> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let outputs = model.forward(data.x.view())?;
    let names = scalers.target_names();
    let rows = |m: &ndarray::Array2<f64>| -> Vec<Vec<f64>> { m.rows().into_iter().map(|r| r.to_vec()).collect() };
    let (classification, regression) = match scalers.task {
        Task::Classifier => {
            let pred: Vec<Vec<bool>> = rows(&outputs)
                .into_iter()
                .map(|r| r.into_iter().map(|v| v >= DECISION_THRESHOLD).collect())
                .collect();
            let truth: Vec<Vec<bool>> = rows(&data.y)
                .into_iter()
                .map(|r| r.into_iter().map(|v| v >= DECISION_THRESHOLD).collect())
                .collect();
            (Some(classification_report(&names, &pred, &truth)?), None)
        }
        Task::Regressor => {
            let pred: Vec<Vec<f64>> = rows(&outputs).iter().map(|r| scalers.unscale_targets(r)).collect();
            let truth: Vec<Vec<f64>> = rows(&data.y).iter().map(|r| scalers.unscale_targets(r)).collect();
            (None, Some(regression_report(&names, &pred, &truth)?))
        }
    };
    Ok(EvaluationReport {
        schema_version: METRICS_SCHEMA_VERSION,
        task: scalers.task,
        n_samples: data.len(),
        classification,
        regression,
        hpo: study.map(HpoReport::from_study),
    })
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |e| EvalError::Io(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EvalError + '_ {
    move |e| EvalError::Io(format!("{}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn confusion_file_name(target: &str) -> String {
    format!("confusion_{target}.csv")
}

/// Writes `metrics.json`, one `confusion_<target>.csv` per classification
/// target, `optimization_history.csv` and `param_importance.csv`. The two HPO
/// tables are header-only when the report has no study. Returns the written
/// paths in a fixed order.
pub fn write_reports(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();

    let path = dir.join(METRICS_FILE);
    let json = serde_json::to_string_pretty(report).map_err(|e| EvalError::Io(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(io(&path))?;
    written.push(path);

    if let Some(c) = &report.classification {
        for t in &c.targets {
            let path = dir.join(confusion_file_name(&t.target));
            let cm = &t.confusion;
            write_csv(
                &path,
                &["actual", "predicted_false", "predicted_true"],
                vec![
                    vec!["false".into(), cm.tn.to_string(), cm.fp.to_string()],
                    vec!["true".into(), cm.fn_.to_string(), cm.tp.to_string()],
                ],
            )?;
            written.push(path);
        }
    }

    let path = dir.join(HISTORY_FILE);
    let history = report
        .hpo
        .iter()
        .flat_map(|h| &h.optimization_history)
        .map(|p| vec![p.number.to_string(), opt(p.objective), opt(p.best_so_far)])
        .collect();
    write_csv(&path, &["trial", "objective", "best_so_far"], history)?;
    written.push(path);

    let path = dir.join(IMPORTANCE_FILE);
    let importance = report
        .hpo
        .iter()
        .flat_map(|h| &h.parameter_importance.scores)
        .map(|(n, s)| vec![n.clone(), s.to_string()])
        .collect();
    write_csv(&path, &["param", "importance"], importance)?;
    written.push(path);

    Ok(written)
}

pub fn load_report(dir: &Path) -> Result<EvaluationReport, EvalError> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}
