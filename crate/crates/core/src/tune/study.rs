use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::pruning::{early_stop, should_prune};
use super::space::{sample_params, SearchSpace, TrialParams};
use super::TuneError;
use crate::domain::Task;
use crate::ingest::{ScalerSet, SplitDataset, SCALERS_FILE};
use crate::neural::{
    init_model, loss, save_checkpoint_with, train_epoch, AdamState, Manifest, MlpConfig, MlpModel,
    OutputHead, CHECKPOINT_FORMAT_VERSION,
};
use crate::rng::{derive_seed, SplitMix64};

pub const STUDY_FILE: &str = "study.json";
pub const TIMING_FILE: &str = "trials_timing.json";
pub const TRIALS_TABLE: &str = "trials.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialState {
    Complete,
    Pruned,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TrialTiming {
    pub fn duration_secs(&self) -> f64 {
        (self.end - self.start).num_microseconds().unwrap_or(0) as f64 / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub number: usize,
    pub state: TrialState,
    pub params: TrialParams,
    /// Validation objective after each epoch, indexed from 0.
    pub intermediate_values: Vec<f64>,
    pub objective: Option<f64>,
    pub early_stopped: bool,
    pub pruned_at_epoch: Option<usize>,
    pub failure: Option<String>,
    /// Wall-clock bounds. Kept out of `study.json` so that the study file is
    /// a pure function of `(space, data, seed)`; persisted in
    /// `trials_timing.json` instead.
    #[serde(skip)]
    pub timing: Option<TrialTiming>,
}

impl TrialRecord {
    /// A record with placeholder params, for seeding pruning history.
    pub fn synthetic(number: usize, state: TrialState, values: Vec<f64>, objective: Option<f64>) -> Self {
        Self {
            number,
            state,
            params: TrialParams {
                batch_size: 1,
                l_rate: 1e-3,
                n_layers: 1,
                layer_sizes: vec![1],
            },
            intermediate_values: values,
            objective,
            early_stopped: false,
            pruned_at_epoch: None,
            failure: None,
            timing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub task: Task,
    /// Name of the minimized objective (`validation_bce` or `validation_mse`).
    pub objective: String,
    pub search_space: SearchSpace,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
    pub best_trial_number: Option<usize>,
}

/// Complete trial with the minimal objective; ties go to the lowest number.
pub fn best_trial(study: &Study) -> Result<&TrialRecord, TuneError> {
    study
        .trials
        .iter()
        .filter(|t| t.state == TrialState::Complete)
        .filter_map(|t| t.objective.map(|o| (o, t)))
        .min_by(|(a, ta), (b, tb)| a.total_cmp(b).then(ta.number.cmp(&tb.number)))
        .map(|(_, t)| t)
        .ok_or(TuneError::NoCompleteTrial)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TuneError + '_ {
    move |e| TuneError::Io(format!("{}: {e}", path.display()))
}

#[derive(Serialize, Deserialize)]
struct TimingEntry {
    number: usize,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    duration_secs: f64,
}

impl Study {
    pub fn complete_trials(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.state == TrialState::Complete)
    }

    /// Writes `study.json`, `trials_timing.json`, the `trials.csv` table and
    /// one `trials/trial_NNN/intermediate_values.csv` per trial.
    pub fn save(&self, dir: &Path) -> Result<(), TuneError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(STUDY_FILE);
        fs::write(&path, serde_json::to_string_pretty(self).expect("study serializes")).map_err(io(&path))?;

        let timing: Vec<TimingEntry> = self
            .trials
            .iter()
            .filter_map(|t| {
                t.timing.map(|tm| TimingEntry {
                    number: t.number,
                    start: tm.start,
                    end: tm.end,
                    duration_secs: tm.duration_secs(),
                })
            })
            .collect();
        let path = dir.join(TIMING_FILE);
        fs::write(&path, serde_json::to_string_pretty(&timing).expect("timing serializes")).map_err(io(&path))?;

        let mut table = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| TuneError::Io(e.to_string());
        table
            .write_record([
                "number", "start", "end", "duration_secs", "state", "batch_size", "l_rate", "n_layers",
                "layer_sizes", "objective",
            ])
            .map_err(csv_err)?;
        for t in &self.trials {
            let (start, end, dur) = match t.timing {
                Some(tm) => (tm.start.to_rfc3339(), tm.end.to_rfc3339(), tm.duration_secs().to_string()),
                None => Default::default(),
            };
            let sizes: Vec<String> = t.params.layer_sizes.iter().map(|s| s.to_string()).collect();
            table
                .write_record([
                    t.number.to_string(),
                    start,
                    end,
                    dur,
                    format!("{:?}", t.state),
                    t.params.batch_size.to_string(),
                    t.params.l_rate.to_string(),
                    t.params.n_layers.to_string(),
                    sizes.join(" "),
                    t.objective.map(|o| o.to_string()).unwrap_or_default(),
                ])
                .map_err(csv_err)?;

            let trial_dir = dir.join("trials").join(format!("trial_{:03}", t.number));
            fs::create_dir_all(&trial_dir).map_err(io(&trial_dir))?;
            let mut values = String::from("epoch,value\n");
            for (epoch, v) in t.intermediate_values.iter().enumerate() {
                values.push_str(&format!("{epoch},{v}\n"));
            }
            let path = trial_dir.join("intermediate_values.csv");
            fs::write(&path, values).map_err(io(&path))?;
        }
        let path = dir.join(TRIALS_TABLE);
        let bytes = table.into_inner().map_err(|e| TuneError::Io(e.to_string()))?;
        fs::write(&path, bytes).map_err(io(&path))
    }

    pub fn load(dir: &Path) -> Result<Study, TuneError> {
        let path = dir.join(STUDY_FILE);
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let mut study: Study =
            serde_json::from_str(&text).map_err(|e| TuneError::Io(format!("{}: {e}", path.display())))?;
        let path = dir.join(TIMING_FILE);
        if let Ok(text) = fs::read_to_string(&path) {
            let timing: Vec<TimingEntry> =
                serde_json::from_str(&text).map_err(|e| TuneError::Io(format!("{}: {e}", path.display())))?;
            for entry in timing {
                if let Some(t) = study.trials.iter_mut().find(|t| t.number == entry.number) {
                    t.timing = Some(TrialTiming {
                        start: entry.start,
                        end: entry.end,
                    });
                }
            }
        }
        Ok(study)
    }
}

/// Early-stopping and pruning settings for a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub patience: usize,
    pub min_delta: f64,
    pub warmup_trials: usize,
    pub warmup_epochs: usize,
    /// Completed trials from elsewhere that count towards the median rule
    /// but are never candidates for the best model.
    pub reference_trials: Vec<TrialRecord>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            patience: 3,
            min_delta: 0.0,
            warmup_trials: 1,
            warmup_epochs: 1,
            reference_trials: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub study: Study,
    pub checkpoint: PathBuf,
}

struct TrialRun {
    record: TrialRecord,
    model: Option<MlpModel>,
}

fn run_trial(
    number: usize,
    space: &SearchSpace,
    data: &SplitDataset,
    head: OutputHead,
    options: &StudyOptions,
    history: &[TrialRecord],
) -> TrialRun {
    let start = Utc::now();
    let trial_seed = derive_seed(space.seed, number as u64);
    let params = sample_params(space, &mut SplitMix64::new(trial_seed));
    let kind = head.loss_kind();
    let mut record = TrialRecord {
        number,
        state: TrialState::Complete,
        params: params.clone(),
        intermediate_values: Vec::with_capacity(space.max_epochs),
        objective: None,
        early_stopped: false,
        pruned_at_epoch: None,
        failure: None,
        timing: None,
    };

    let outcome = (|| -> Result<Option<MlpModel>, String> {
        let config = MlpConfig::new(data.train.x.ncols(), params.layer_sizes.clone(), data.train.y.ncols(), head)
            .map_err(|e| e.to_string())?;
        let mut model = init_model(&config, derive_seed(trial_seed, 1)).map_err(|e| e.to_string())?;
        let mut adam = AdamState::new(&model);
        for epoch in 0..space.max_epochs {
            let shuffle_seed = derive_seed(trial_seed, 2 + epoch as u64);
            train_epoch(&mut model, &mut adam, &data.train, params.batch_size, params.l_rate, kind, shuffle_seed)
                .map_err(|e| e.to_string())?;
            let predictions = model.forward(data.test.x.view()).map_err(|e| e.to_string())?;
            let value = loss(predictions.view(), data.test.y.view(), kind).map_err(|e| e.to_string())?;
            if !value.is_finite() || !model.is_finite() {
                return Err(format!("non-finite validation objective at epoch {epoch}"));
            }
            record.intermediate_values.push(value);
            let completed = history.iter().chain(&options.reference_trials);
            if should_prune(completed, &record.intermediate_values, epoch, options.warmup_trials, options.warmup_epochs) {
                record.state = TrialState::Pruned;
                record.pruned_at_epoch = Some(epoch);
                return Ok(None);
            }
            if early_stop(&record.intermediate_values, options.patience, options.min_delta) {
                record.early_stopped = true;
                break;
            }
        }
        Ok(Some(model))
    })();

    let model = match outcome {
        Ok(Some(model)) => {
            record.objective = record.intermediate_values.last().copied();
            Some(model)
        }
        Ok(None) => None,
        Err(reason) => {
            log::warn!("trial {number} failed: {reason}");
            record.state = TrialState::Failed;
            record.failure = Some(reason);
            None
        }
    };
    record.timing = Some(TrialTiming { start, end: Utc::now().max(start) });
    TrialRun { record, model }
}

/// Runs `space.n_trials` trials sequentially and checkpoints the best
/// trial's final model (with a copy of the scalers) to `checkpoint_dir`.
/// The study is written to `study_dir` whether or not a trial completes.
pub fn run_study(
    space: &SearchSpace,
    data: &SplitDataset,
    scalers: &ScalerSet,
    options: &StudyOptions,
    study_dir: &Path,
    checkpoint_dir: &Path,
) -> Result<StudyOutcome, TuneError> {
    space.validate()?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(TuneError::EmptyData);
    }
    let task = scalers.task;
    let head = match task {
        Task::Classifier => OutputHead::Sigmoid,
        Task::Regressor => OutputHead::Linear,
    };
    let mut study = Study {
        task,
        objective: match task {
            Task::Classifier => "validation_bce".into(),
            Task::Regressor => "validation_mse".into(),
        },
        search_space: space.clone(),
        seed: space.seed,
        trials: Vec::with_capacity(space.n_trials),
        best_trial_number: None,
    };
    let mut best: Option<(f64, MlpModel)> = None;
    for number in 0..space.n_trials {
        let run = run_trial(number, space, data, head, options, &study.trials);
        log::info!(
            "trial {number}: {:?} objective={:?} params={:?}",
            run.record.state,
            run.record.objective,
            run.record.params
        );
        if let (Some(model), Some(obj)) = (run.model, run.record.objective) {
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, model));
            }
        }
        study.trials.push(run.record);
    }
    study.best_trial_number = best_trial(&study).ok().map(|t| t.number);
    study.save(study_dir)?;

    let Some((objective, model)) = best else {
        return Err(TuneError::NoCompleteTrial);
    };
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        task,
        config: model.config.clone(),
        feature_columns: scalers.feature_names(),
        encoded_feature_columns: scalers.encoded_feature_names(),
        target_columns: scalers.target_names(),
        scalers_fingerprint: scalers.fingerprint.clone(),
        objective: Some(objective),
        trial_number: study.best_trial_number,
    };
    let scalers_json = serde_json::to_string_pretty(scalers).expect("scalers serialize");
    save_checkpoint_with(&model, &manifest, checkpoint_dir, &[(SCALERS_FILE, scalers_json.as_bytes())])?;
    Ok(StudyOutcome {
        study,
        checkpoint: checkpoint_dir.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study_with(objectives: &[Option<f64>]) -> Study {
        Study {
            task: Task::Classifier,
            objective: "validation_bce".into(),
            search_space: SearchSpace::default(),
            seed: 42,
            trials: objectives
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    let state = if o.is_some() { TrialState::Complete } else { TrialState::Pruned };
                    TrialRecord::synthetic(i, state, o.iter().copied().collect(), *o)
                })
                .collect(),
            best_trial_number: None,
        }
    }

    #[test]
    fn best_trial_examples() {
        assert_eq!(best_trial(&study_with(&[Some(0.3), Some(0.2), Some(0.25)])).unwrap().number, 1);
        assert_eq!(best_trial(&study_with(&[Some(0.2), Some(0.2)])).unwrap().number, 0);
        assert_eq!(best_trial(&study_with(&[None, None])).unwrap_err(), TuneError::NoCompleteTrial);
    }

    #[test]
    fn pruned_trials_never_win() {
        let mut s = study_with(&[Some(0.5), None]);
        s.trials[1].objective = Some(0.01);
        assert_eq!(best_trial(&s).unwrap().number, 0);
    }

    #[test]
    fn save_load_round_trip() {
        let mut s = study_with(&[Some(0.3), None, Some(0.1)]);
        let now = Utc::now();
        s.trials[0].timing = Some(TrialTiming { start: now, end: now + chrono::Duration::milliseconds(1500) });
        s.trials[2].params.l_rate = 0.000123456789;
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let loaded = Study::load(dir.path()).unwrap();
        assert_eq!(loaded, s);
        assert_eq!(loaded.trials[0].timing.unwrap().duration_secs(), 1.5);
        assert!(dir.path().join("trials/trial_002/intermediate_values.csv").is_file());
        let table = fs::read_to_string(dir.path().join(TRIALS_TABLE)).unwrap();
        assert_eq!(table.lines().count(), 4);
        let study_json = fs::read_to_string(dir.path().join(STUDY_FILE)).unwrap();
        assert!(!study_json.contains("start"));
    }
}
