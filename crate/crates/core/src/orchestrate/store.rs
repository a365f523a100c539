use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use super::record::RunRecord;
use super::{io, OrchestrateError};

pub const RUN_FILE: &str = "run.json";

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OrchestrateError> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io(parent))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = parent.join(format!(".{name}.tmp-{}-{n}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

/// Directory layout under one root: `runs/<run_id>/{ingest,train,eval}`
/// plus `registry/<service>/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, OrchestrateError> {
        let root = root.into();
        fs::create_dir_all(root.join("runs")).map_err(io(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn registry_dir(&self) -> PathBuf {
        self.root.join("registry")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn save_record(&self, record: &RunRecord) -> Result<(), OrchestrateError> {
        let path = self.run_dir(&record.run_id).join(RUN_FILE);
        let text = serde_json::to_string_pretty(record).map_err(|e| OrchestrateError::Io(e.to_string()))?;
        write_atomic(&path, text.as_bytes())
    }

    pub fn load_record(&self, run_id: &str) -> Result<RunRecord, OrchestrateError> {
        // Reject ids that could escape the runs directory.
        if run_id.is_empty() || !run_id.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(OrchestrateError::NotFound(run_id.to_string()));
        }
        let path = self.run_dir(run_id).join(RUN_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(OrchestrateError::NotFound(run_id.to_string()))
            }
            Err(e) => return Err(OrchestrateError::Io(format!("{}: {e}", path.display()))),
        };
        serde_json::from_str(&text).map_err(|e| OrchestrateError::Io(format!("{}: {e}", path.display())))
    }

    /// Run ids with a record on disk, oldest first.
    pub fn list_runs(&self) -> Result<Vec<String>, OrchestrateError> {
        let dir = self.runs_dir();
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(Result::ok)
            .filter(|e| e.path().join(RUN_FILE).is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids)
    }
}
