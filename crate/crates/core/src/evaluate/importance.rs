use serde::{Deserialize, Serialize};

use crate::tune::{Study, TrialState};

/// Tuned parameters in report order.
pub const PARAM_NAMES: [&str; 4] = ["batch_size", "l_rate", "n_layers", "layer_sizes"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamImportance {
    /// `(param, score)` in [`PARAM_NAMES`] order.
    pub scores: Vec<(String, f64)>,
    /// Fewer than three complete trials, or no parameter correlated with
    /// the objective at all. Every score is 0 in that case.
    pub insufficient_data: bool,
}

impl ParamImportance {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    fn zeros() -> Self {
        Self {
            scores: PARAM_NAMES.iter().map(|n| (n.to_string(), 0.0)).collect(),
            insufficient_data: true,
        }
    }
}

/// Ranks starting at 1, with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Absolute Spearman correlation of each parameter with the objective over
/// complete trials, normalized to sum to 1. Batch size enters as the index
/// of its choice in the search space, layer sizes as their mean.
pub fn param_importance(study: &Study) -> ParamImportance {
    let complete: Vec<_> = study
        .trials
        .iter()
        .filter(|t| t.state == TrialState::Complete)
        .filter_map(|t| t.objective.map(|o| (o, &t.params)))
        .collect();
    if complete.len() < 3 {
        return ParamImportance::zeros();
    }
    let objective: Vec<f64> = complete.iter().map(|(o, _)| *o).collect();
    let choice_index = |b: usize| {
        study
            .search_space
            .batch_size
            .iter()
            .position(|&c| c == b)
            .unwrap_or(study.search_space.batch_size.len()) as f64
    };
    let columns: [Vec<f64>; 4] = [
        complete.iter().map(|(_, p)| choice_index(p.batch_size)).collect(),
        complete.iter().map(|(_, p)| p.l_rate).collect(),
        complete.iter().map(|(_, p)| p.n_layers as f64).collect(),
        complete
            .iter()
            .map(|(_, p)| p.layer_sizes.iter().sum::<usize>() as f64 / p.layer_sizes.len().max(1) as f64)
            .collect(),
    ];
    let raw: Vec<f64> = columns.iter().map(|c| spearman(c, &objective).abs()).collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return ParamImportance::zeros();
    }
    ParamImportance {
        scores: PARAM_NAMES
            .iter()
            .zip(&raw)
            .map(|(n, s)| (n.to_string(), s / total))
            .collect(),
        insufficient_data: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub number: usize,
    /// Present for complete trials only.
    pub objective: Option<f64>,
    /// Running minimum over complete trials so far.
    pub best_so_far: Option<f64>,
}

pub fn optimization_history(study: &Study) -> Vec<HistoryPoint> {
    let mut best: Option<f64> = None;
    study
        .trials
        .iter()
        .map(|t| {
            let objective = if t.state == TrialState::Complete { t.objective } else { None };
            if let Some(o) = objective {
                best = Some(best.map_or(o, |b| b.min(o)));
            }
            HistoryPoint {
                number: t.number,
                objective,
                best_so_far: best,
            }
        })
        .collect()
}
