use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::store::write_atomic;
use super::{io, OrchestrateError};
use crate::domain::{Task, PV_FEATURES, PV_TARGETS, RETROFIT_FEATURES, RETROFIT_TARGETS};
use crate::ingest::{ScalerSet, SCALERS_FILE};
use crate::neural::{load_checkpoint, replace_dir, staging_path, Checkpoint};

/// Text file naming the active version of a service.
pub const ACTIVE_FILE: &str = "ACTIVE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Service {
    Retrofit,
    Pv,
}

impl Service {
    pub const ALL: [Service; 2] = [Service::Retrofit, Service::Pv];

    pub fn name(self) -> &'static str {
        match self {
            Service::Retrofit => "retrofit",
            Service::Pv => "pv",
        }
    }

    pub fn task(self) -> Task {
        match self {
            Service::Retrofit => Task::Classifier,
            Service::Pv => Task::Regressor,
        }
    }

    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            Service::Retrofit => &RETROFIT_FEATURES,
            Service::Pv => &PV_FEATURES,
        }
    }

    pub fn target_names(self) -> &'static [&'static str] {
        match self {
            Service::Retrofit => &RETROFIT_TARGETS,
            Service::Pv => &PV_TARGETS,
        }
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Service {
    type Err = OrchestrateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "retrofit" => Ok(Service::Retrofit),
            "pv" => Ok(Service::Pv),
            _ => Err(OrchestrateError::UnknownService(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionInfo {
    pub service: Service,
    pub version: String,
    pub path: PathBuf,
    pub active: bool,
    pub objective: Option<f64>,
    pub scalers_fingerprint: String,
}

/// Versioned checkpoints per service under `<root>/<service>/vNNNN`, with
/// the active version named in `<root>/<service>/ACTIVE`.
#[derive(Debug)]
pub struct Registry {
    root: PathBuf,
    write_lock: Mutex<()>,
}

fn version_number(name: &str) -> Option<u32> {
    name.strip_prefix('v').filter(|d| d.len() == 4).and_then(|d| d.parse().ok())
}

/// Column lists may come in any order; the scalers record the one in use.
fn same_set(found: &[String], expected: &[&str]) -> bool {
    let mut a: Vec<&str> = found.iter().map(String::as_str).collect();
    let mut b = expected.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

impl Registry {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn service_dir(&self, service: Service) -> PathBuf {
        self.root.join(service.name())
    }

    fn version_names(&self, service: Service) -> Result<Vec<String>, OrchestrateError> {
        let dir = self.service_dir(service);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| version_number(n).is_some())
            .collect();
        names.sort();
        Ok(names)
    }

    pub fn active_version(&self, service: Service) -> Result<Option<String>, OrchestrateError> {
        let path = self.service_dir(service).join(ACTIVE_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text.trim().to_string()).filter(|v| version_number(v).is_some())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(OrchestrateError::Io(format!("{}: {e}", path.display()))),
        }
    }

    /// Directory of the active checkpoint, if any.
    pub fn active_path(&self, service: Service) -> Result<Option<PathBuf>, OrchestrateError> {
        Ok(self.active_version(service)?.map(|v| self.service_dir(service).join(v)))
    }

    pub fn list_versions(&self, service: Service) -> Result<Vec<VersionInfo>, OrchestrateError> {
        let active = self.active_version(service)?;
        self.version_names(service)?
            .into_iter()
            .map(|version| {
                let path = self.service_dir(service).join(&version);
                let manifest = crate::neural::load_manifest(&path)?;
                Ok(VersionInfo {
                    service,
                    active: active.as_deref() == Some(version.as_str()),
                    version,
                    path,
                    objective: manifest.objective,
                    scalers_fingerprint: manifest.scalers_fingerprint,
                })
            })
            .collect()
    }

    /// Loads the active checkpoint and its scalers.
    pub fn load_active(&self, service: Service) -> Result<Option<(String, Checkpoint, ScalerSet)>, OrchestrateError> {
        let Some(version) = self.active_version(service)? else { return Ok(None) };
        let dir = self.service_dir(service).join(&version);
        let checkpoint = load_checkpoint(&dir)?;
        let scalers = ScalerSet::load(&dir.join(SCALERS_FILE))?;
        Ok(Some((version, checkpoint, scalers)))
    }

    /// Verifies `checkpoint_dir` against the service contract, copies it
    /// into a new version directory and then points `ACTIVE` at it. Earlier
    /// versions are kept.
    pub fn deploy_checkpoint(&self, service: Service, checkpoint_dir: &Path) -> Result<VersionInfo, OrchestrateError> {
        let checkpoint = load_checkpoint(checkpoint_dir)?;
        let m = &checkpoint.manifest;
        let mismatch = |reason: String| OrchestrateError::TaskMismatch {
            service: service.to_string(),
            reason,
        };
        if m.task != service.task() {
            return Err(mismatch(format!("checkpoint task is {}, service needs {}", m.task, service.task())));
        }
        if !same_set(&m.target_columns, service.target_names()) {
            return Err(mismatch(format!("target columns {:?}", m.target_columns)));
        }
        if !same_set(&m.feature_columns, service.feature_names()) {
            return Err(mismatch(format!("feature columns {:?}", m.feature_columns)));
        }
        let scalers = ScalerSet::load(&checkpoint_dir.join(SCALERS_FILE))?;
        if scalers.fingerprint != m.scalers_fingerprint {
            return Err(mismatch("scalers fingerprint differs from manifest".into()));
        }

        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let next = self
            .version_names(service)?
            .iter()
            .filter_map(|n| version_number(n))
            .max()
            .unwrap_or(0)
            + 1;
        let version = format!("v{next:04}");
        let target = self.service_dir(service).join(&version);
        let staging = staging_path(&target);
        fs::create_dir_all(&staging).map_err(io(&staging))?;
        for entry in fs::read_dir(checkpoint_dir).map_err(io(checkpoint_dir))? {
            let entry = entry.map_err(io(checkpoint_dir))?;
            if entry.path().is_file() {
                let dest = staging.join(entry.file_name());
                fs::copy(entry.path(), &dest).map_err(io(&dest))?;
            }
        }
        replace_dir(&staging, &target)?;
        write_atomic(&self.service_dir(service).join(ACTIVE_FILE), format!("{version}\n").as_bytes())?;
        log::info!("deployed {} as {service} {version}", checkpoint_dir.display());
        Ok(VersionInfo {
            service,
            version,
            path: target,
            active: true,
            objective: m.objective,
            scalers_fingerprint: m.scalers_fingerprint.clone(),
        })
    }
}
