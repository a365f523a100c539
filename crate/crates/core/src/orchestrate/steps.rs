use std::fs;
use std::path::{Path, PathBuf};

use super::record::Step;
use super::store::ArtifactStore;
use super::{io, OrchestrateError};
use crate::config::RunConfig;
use crate::evaluate::{evaluate_model, write_reports};
use crate::ingest::{load_ingest_artifacts, run_ingestion, IngestArtifacts, ScalerSet, SCALERS_FILE};
use crate::neural::{load_checkpoint, MANIFEST_FILE};
use crate::tune::{run_study, SearchSpace, Study, StudyOptions, STUDY_FILE};

/// Where one run keeps each step's outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub run_dir: PathBuf,
    pub ingest: PathBuf,
    pub train: PathBuf,
    pub checkpoint: PathBuf,
    pub eval: PathBuf,
    pub scalers_copy: PathBuf,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
}

impl RunPaths {
    pub fn new(store: &ArtifactStore, run_id: &str, config: &RunConfig) -> Self {
        let run_dir = store.run_dir(run_id);
        Self {
            ingest: run_dir.join("ingest"),
            train: run_dir.join("train"),
            checkpoint: resolve(&run_dir, &config.ml_path),
            eval: resolve(&run_dir, &config.optuna_viz),
            scalers_copy: resolve(&run_dir, &config.scalers_path),
            run_dir,
        }
    }

    /// Paths of a prior run, resolved with that run's own config when its
    /// record is readable, plus that run's own `from_run`.
    fn of_prior(store: &ArtifactStore, run_id: &str, fallback: &RunConfig) -> (Self, Option<String>) {
        match store.load_record(run_id) {
            Ok(r) => (Self::new(store, run_id, &r.config), r.config.from_run.clone()),
            Err(_) => (Self::new(store, run_id, fallback), None),
        }
    }
}

/// Longest `from_run` chain followed when looking for prior artifacts.
const MAX_CHAIN: usize = 32;

/// Walks the `from_run` chain from `start` and returns the first run whose
/// paths satisfy `has`, or `start` itself when none does.
fn find_prior(
    store: &ArtifactStore,
    start: &str,
    config: &RunConfig,
    has: impl Fn(&RunPaths) -> bool,
) -> RunPaths {
    let (first, mut next) = RunPaths::of_prior(store, start, config);
    if has(&first) {
        return first;
    }
    for _ in 0..MAX_CHAIN {
        let Some(id) = next else { break };
        let (paths, after) = RunPaths::of_prior(store, &id, config);
        if has(&paths) {
            return paths;
        }
        next = after;
    }
    first
}

/// Paths that supply ingestion outputs and the checkpoint for a run.
struct Sources {
    ingest: RunPaths,
    training: RunPaths,
}

fn sources(store: &ArtifactStore, run_id: &str, config: &RunConfig, steps: &[Step]) -> Sources {
    let own = RunPaths::new(store, run_id, config);
    let pick = |step: Step, has: fn(&RunPaths) -> bool| match (&config.from_run, steps.contains(&step)) {
        (Some(id), false) => find_prior(store, id, config, has),
        _ => own.clone(),
    };
    Sources {
        ingest: pick(Step::Ingestion, |p| IngestArtifacts::in_dir(&p.ingest).exist()),
        training: pick(Step::Training, |p| p.checkpoint.join(MANIFEST_FILE).is_file()),
    }
}

/// Fails with `MissingArtifact` when a requested step depends on outputs
/// that neither an earlier requested step nor `from_run` provides.
pub fn check_dependencies(
    store: &ArtifactStore,
    run_id: &str,
    config: &RunConfig,
    steps: &[Step],
) -> Result<(), OrchestrateError> {
    if steps.is_empty() {
        return Err(OrchestrateError::NoSteps);
    }
    let src = sources(store, run_id, config, steps);
    let has = |s: Step| steps.contains(&s);
    let ingest_ready = has(Step::Ingestion) || IngestArtifacts::in_dir(&src.ingest.ingest).exist();
    if has(Step::Training) && !ingest_ready {
        return Err(OrchestrateError::missing(Step::Training, "train-data"));
    }
    if has(Step::Evaluation) {
        if !has(Step::Training) && !src.training.checkpoint.join(MANIFEST_FILE).is_file() {
            return Err(OrchestrateError::missing(Step::Evaluation, "checkpoint"));
        }
        if !ingest_ready {
            return Err(OrchestrateError::missing(Step::Evaluation, "test-data"));
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Runs one step and returns the artifacts it wrote.
pub fn execute_step(
    store: &ArtifactStore,
    run_id: &str,
    config: &RunConfig,
    steps: &[Step],
    step: Step,
) -> Result<Vec<String>, OrchestrateError> {
    let own = RunPaths::new(store, run_id, config);
    let src = sources(store, run_id, config, steps);
    match step {
        Step::Ingestion => {
            let artifacts = run_ingestion(config, &own.ingest)?;
            let mut out = vec![
                display(&artifacts.train_data),
                display(&artifacts.test_data),
                display(&artifacts.scalers),
                display(&artifacts.meta),
            ];
            if own.scalers_copy != artifacts.scalers {
                if let Some(parent) = own.scalers_copy.parent() {
                    fs::create_dir_all(parent).map_err(io(parent))?;
                }
                fs::copy(&artifacts.scalers, &own.scalers_copy).map_err(io(&own.scalers_copy))?;
                out.push(display(&own.scalers_copy));
            }
            Ok(out)
        }
        Step::Training => {
            let artifacts = IngestArtifacts::in_dir(&src.ingest.ingest);
            if !artifacts.exist() {
                return Err(OrchestrateError::missing(Step::Training, "train-data"));
            }
            let loaded = load_ingest_artifacts(&artifacts)?;
            let space = SearchSpace::from_config(config);
            let options = StudyOptions {
                patience: config.patience,
                min_delta: config.min_delta,
                warmup_trials: config.warmup_trials,
                warmup_epochs: config.warmup_epochs,
                reference_trials: Vec::new(),
            };
            let outcome = run_study(&space, &loaded.data, &loaded.scalers, &options, &own.train, &own.checkpoint)?;
            Ok(vec![display(&own.train.join(STUDY_FILE)), display(&outcome.checkpoint)])
        }
        Step::Evaluation => {
            let ckpt_dir = &src.training.checkpoint;
            if !ckpt_dir.join(MANIFEST_FILE).is_file() {
                return Err(OrchestrateError::missing(Step::Evaluation, "checkpoint"));
            }
            let artifacts = IngestArtifacts::in_dir(&src.ingest.ingest);
            if !artifacts.exist() {
                return Err(OrchestrateError::missing(Step::Evaluation, "test-data"));
            }
            let checkpoint = load_checkpoint(ckpt_dir)?;
            let scalers = ScalerSet::load(&ckpt_dir.join(SCALERS_FILE))?;
            let loaded = load_ingest_artifacts(&artifacts)?;
            if loaded.scalers.fingerprint != checkpoint.manifest.scalers_fingerprint {
                return Err(OrchestrateError::missing(Step::Evaluation, "matching test-data"));
            }
            let study_dir = &src.training.train;
            let study = if study_dir.join(STUDY_FILE).is_file() {
                Some(Study::load(study_dir)?)
            } else {
                None
            };
            let report = evaluate_model(&checkpoint.model, &scalers, &loaded.data.test, study.as_ref())?;
            let written = write_reports(&report, &own.eval)?;
            Ok(written.iter().map(|p| display(p)).collect())
        }
    }
}
