use serde::{Deserialize, Serialize};

use super::EvalError;

/// Binary confusion counts; rows are actual labels, columns predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion_matrix(predictions: &[bool], truth: &[bool]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        match (t, p) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when `tp + fp == 0`; precision is reported as 0.
    pub precision_degenerate: bool,
    /// Set when `tp + fn == 0`; recall is reported as 0.
    pub recall_degenerate: bool,
    /// Set when precision + recall is 0; f1 is reported as 0.
    pub f1_degenerate: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> ClassificationMetrics {
    let (accuracy, _) = ratio(cm.tp + cm.tn, cm.total());
    let (precision, precision_degenerate) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, recall_degenerate) = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, f1_degenerate) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    };
    ClassificationMetrics {
        accuracy,
        precision,
        recall,
        f1,
        precision_degenerate,
        recall_degenerate,
        f1_degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Mean absolute percentage error as a fraction, over non-zero truths.
    pub mape: f64,
    pub r2: f64,
    /// Entries left out of MAPE because their truth was zero.
    pub mape_skipped: usize,
    /// Set when the truth is constant; `r2` is then 1 for a perfect fit
    /// and 0 otherwise.
    pub r2_degenerate: bool,
}

pub fn regression_metrics(predictions: &[f64], truth: &[f64]) -> Result<RegressionMetrics, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let n = truth.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    let nf = n as f64;
    let mean_truth = truth.iter().sum::<f64>() / nf;
    let (mut abs, mut sq, mut pct, mut ss_tot) = (0.0, 0.0, 0.0, 0.0);
    let mut pct_n = 0usize;
    for (&p, &t) in predictions.iter().zip(truth) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        ss_tot += (t - mean_truth) * (t - mean_truth);
        if t != 0.0 {
            pct += (e / t).abs();
            pct_n += 1;
        }
    }
    let mae = abs / nf;
    // The power-mean inequality guarantees rmse >= mae; the max only
    // absorbs rounding in the last ulp.
    let rmse = (sq / nf).sqrt().max(mae);
    let r2_degenerate = ss_tot == 0.0;
    let r2 = if r2_degenerate {
        if sq == 0.0 { 1.0 } else { 0.0 }
    } else {
        1.0 - sq / ss_tot
    };
    Ok(RegressionMetrics {
        mae,
        rmse,
        mape: if pct_n > 0 { pct / pct_n as f64 } else { 0.0 },
        r2,
        mape_skipped: n - pct_n,
        r2_degenerate,
    })
}
