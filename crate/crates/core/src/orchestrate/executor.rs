use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Sender};
use std::sync::Mutex;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use ulid::Ulid;

use super::record::{RunRecord, RunStatus, Step, StepStatus};
use super::steps::{check_dependencies, execute_step};
use super::store::ArtifactStore;
use super::OrchestrateError;
use crate::config::RunConfig;

struct Job {
    run_id: String,
    config: RunConfig,
}

/// Accepts runs and executes them one at a time, in launch order, on a
/// dedicated thread. Records live in `runs/<run_id>/run.json`.
pub struct Orchestrator {
    store: ArtifactStore,
    tx: Mutex<Option<Sender<Job>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Orchestrator {
    pub fn new(store: ArtifactStore) -> Self {
        let (tx, rx) = channel::<Job>();
        let worker_store = store.clone();
        let worker = std::thread::Builder::new()
            .name("run-executor".into())
            .spawn(move || {
                for job in rx {
                    if let Err(e) = execute_run(&worker_store, &job) {
                        log::error!("run {} could not be recorded: {e}", job.run_id);
                    }
                }
            })
            .expect("spawn run executor");
        Self {
            store,
            tx: Mutex::new(Some(tx)),
            worker: Mutex::new(Some(worker)),
        }
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.store
    }

    /// Validates step dependencies, records the run as queued and hands it
    /// to the executor. Returns without waiting for the run to start.
    pub fn launch(&self, config: RunConfig, steps: &[Step]) -> Result<String, OrchestrateError> {
        let mut steps = steps.to_vec();
        steps.sort();
        steps.dedup();
        let run_id = Ulid::new().to_string();
        check_dependencies(&self.store, &run_id, &config, &steps)?;
        let record = RunRecord::new(run_id.clone(), steps, &config, chrono::Utc::now());
        self.store.save_record(&record)?;
        let guard = self.tx.lock().unwrap_or_else(|e| e.into_inner());
        let sent = guard
            .as_ref()
            .map(|tx| tx.send(Job { run_id: run_id.clone(), config }).is_ok())
            .unwrap_or(false);
        if !sent {
            let mut record = record;
            record.status = RunStatus::Failed;
            record.error = Some(OrchestrateError::Shutdown.to_string());
            record.finished_at = Some(record.now());
            self.store.save_record(&record)?;
            return Err(OrchestrateError::Shutdown);
        }
        log::info!("queued run {run_id}");
        Ok(run_id)
    }

    pub fn run_status(&self, run_id: &str) -> Result<RunRecord, OrchestrateError> {
        self.store.load_record(run_id)
    }

    /// Polls until the run reaches a terminal status.
    pub fn wait(&self, run_id: &str, timeout: Duration) -> Result<RunRecord, OrchestrateError> {
        let deadline = Instant::now() + timeout;
        loop {
            let record = self.run_status(run_id)?;
            if record.status.is_terminal() {
                return Ok(record);
            }
            if Instant::now() >= deadline {
                return Err(OrchestrateError::Timeout(run_id.to_string()));
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    /// Finishes queued runs and stops the executor.
    pub fn shutdown(&self) {
        self.tx.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(handle) = self.worker.lock().unwrap_or_else(|e| e.into_inner()).take() {
            let _ = handle.join();
        }
    }
}

impl Drop for Orchestrator {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "step panicked".into())
}

fn execute_run(store: &ArtifactStore, job: &Job) -> Result<(), OrchestrateError> {
    let mut record = store.load_record(&job.run_id)?;
    record.status = RunStatus::Running;
    record.started_at = Some(record.now());
    store.save_record(&record)?;
    log::info!("run {} started", job.run_id);

    let steps = record.steps.clone();
    for &step in &steps {
        let now = record.now();
        let s = record.step_mut(step).expect("record lists every step");
        s.status = StepStatus::Running;
        s.started_at = Some(now);
        store.save_record(&record)?;

        let result = catch_unwind(AssertUnwindSafe(|| execute_step(store, &job.run_id, &job.config, &steps, step)))
            .unwrap_or_else(|p| Err(OrchestrateError::Io(panic_message(p))));
        let now = record.now();
        let s = record.step_mut(step).expect("record lists every step");
        s.finished_at = Some(now);
        match result {
            Ok(artifacts) => {
                s.status = StepStatus::Succeeded;
                s.artifacts = artifacts;
                store.save_record(&record)?;
            }
            Err(e) => {
                log::error!("run {} failed in {step}: {e}", job.run_id);
                s.status = StepStatus::Failed;
                s.error = Some(e.to_string());
                record.status = RunStatus::Failed;
                record.error = Some(format!("{step}: {e}"));
                record.finished_at = Some(record.now());
                return store.save_record(&record);
            }
        }
    }
    record.status = RunStatus::Succeeded;
    record.finished_at = Some(record.now());
    log::info!("run {} succeeded", job.run_id);
    store.save_record(&record)
}
