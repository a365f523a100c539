use super::study::{TrialRecord, TrialState};

/// Median of a non-empty slice.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median rule for minimization.
///
/// Returns false while `epoch < warmup_epochs`, while fewer than
/// `warmup_trials` completed trials exist, or when no completed trial
/// reported a value at `epoch`. Otherwise prunes iff the current value at
/// `epoch` is strictly greater than the median of the completed trials'
/// values at that epoch.
pub fn should_prune<'a>(
    completed: impl IntoIterator<Item = &'a TrialRecord>,
    current: &[f64],
    epoch: usize,
    warmup_trials: usize,
    warmup_epochs: usize,
) -> bool {
    if epoch < warmup_epochs {
        return false;
    }
    let Some(&value) = current.get(epoch) else {
        return false;
    };
    let mut n_complete = 0;
    let mut at_epoch = Vec::new();
    for t in completed.into_iter().filter(|t| t.state == TrialState::Complete) {
        n_complete += 1;
        if let Some(v) = t.intermediate_values.get(epoch) {
            at_epoch.push(*v);
        }
    }
    if n_complete < warmup_trials || at_epoch.is_empty() {
        return false;
    }
    value > median(&mut at_epoch)
}

/// True iff the best value has not improved by more than `min_delta` over
/// the last `patience` epochs.
pub fn early_stop(values: &[f64], patience: usize, min_delta: f64) -> bool {
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for &v in values {
        if v < best - min_delta {
            best = v;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    patience > 0 && stale >= patience
}
