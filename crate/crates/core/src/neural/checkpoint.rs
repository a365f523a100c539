//! Checkpoint directory layout:
//!
//! * `manifest.json` — architecture, task, column names, scaler fingerprint
//!   and objective;
//! * `weights.bin` — magic `MLPW`, `u32` format version, `u32` layer count,
//!   a `(fan_in, fan_out)` `u32` pair per layer, then per layer the weight
//!   matrix row-major followed by the bias, all little-endian `f64`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{Dense, MlpConfig, MlpModel};
use super::NeuralError;
use crate::domain::Task;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const MAGIC: &[u8; 4] = b"MLPW";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub task: Task,
    pub config: MlpConfig,
    pub feature_columns: Vec<String>,
    pub encoded_feature_columns: Vec<String>,
    pub target_columns: Vec<String>,
    pub scalers_fingerprint: String,
    pub objective: Option<f64>,
    pub trial_number: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: MlpModel,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> NeuralError + '_ {
    move |e| NeuralError::Io(format!("{}: {e}", path.display()))
}

pub fn encode_weights(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * model.n_parameters() + 8 * model.layers.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        let (i, o) = layer.shape();
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(o as u32).to_le_bytes());
    }
    for layer in &model.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NeuralError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NeuralError::CorruptWeights(format!("blob truncated at byte {}", self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NeuralError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NeuralError::CorruptWeights("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Decodes a weights blob and checks it against `config`.
pub fn decode_weights(bytes: &[u8], config: &MlpConfig) -> Result<MlpModel, NeuralError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NeuralError::CorruptWeights("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(NeuralError::VersionMismatch {
            found: version,
            supported: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let n = r.u32()? as usize;
    let expected = config.shapes();
    if n != expected.len() {
        return Err(NeuralError::CorruptWeights(format!(
            "blob has {n} layers, manifest expects {}",
            expected.len()
        )));
    }
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    if shapes != expected {
        return Err(NeuralError::CorruptWeights(format!(
            "shape table {shapes:?} does not match manifest {expected:?}"
        )));
    }
    let mut layers = Vec::with_capacity(n);
    for &(fan_in, fan_out) in &shapes {
        let w = r.f64s(fan_in * fan_out)?;
        let b = r.f64s(fan_out)?;
        layers.push(Dense {
            weights: Array2::from_shape_vec((fan_in, fan_out), w).expect("sized above"),
            bias: Array1::from_vec(b),
        });
    }
    if r.pos != bytes.len() {
        return Err(NeuralError::CorruptWeights(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let model = MlpModel {
        config: config.clone(),
        layers,
    };
    if !model.is_finite() {
        return Err(NeuralError::CorruptWeights("non-finite parameter".into()));
    }
    Ok(model)
}

/// Writes the checkpoint into a sibling temporary directory and renames it
/// into place, so readers never observe a partial checkpoint.
pub fn save_checkpoint(model: &MlpModel, manifest: &Manifest, dir: &Path) -> Result<(), NeuralError> {
    save_checkpoint_with(model, manifest, dir, &[])
}

/// Like [`save_checkpoint`], also writing `extra` `(file name, contents)`
/// pairs into the same directory before it is published.
pub fn save_checkpoint_with(
    model: &MlpModel,
    manifest: &Manifest,
    dir: &Path,
    extra: &[(&str, &[u8])],
) -> Result<(), NeuralError> {
    if manifest.config != model.config {
        return Err(NeuralError::InvalidConfig("manifest config differs from model".into()));
    }
    let staging = staging_path(dir);
    fs::create_dir_all(&staging).map_err(io(&staging))?;
    let manifest_path = staging.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(io(&manifest_path))?;
    let weights_path = staging.join(WEIGHTS_FILE);
    fs::write(&weights_path, encode_weights(model)).map_err(io(&weights_path))?;
    for (name, contents) in extra {
        let path = staging.join(name);
        fs::write(&path, contents).map_err(io(&path))?;
    }
    replace_dir(&staging, dir)
}

static STAGING_COUNTER: AtomicU64 = AtomicU64::new(0);

pub(crate) fn staging_path(dir: &Path) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let n = STAGING_COUNTER.fetch_add(1, Ordering::Relaxed);
    dir.with_file_name(format!(".{name}.staging-{}-{n}", std::process::id()))
}

/// Moves `staging` to `dir`, replacing any previous directory there.
pub(crate) fn replace_dir(staging: &Path, dir: &Path) -> Result<(), NeuralError> {
    if dir.exists() {
        let old = staging_path(dir).with_extension("old");
        fs::rename(dir, &old).map_err(io(dir))?;
        fs::rename(staging, dir).map_err(io(dir))?;
        fs::remove_dir_all(&old).map_err(io(&old))?;
    } else {
        if let Some(parent) = dir.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::rename(staging, dir).map_err(io(dir))?;
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, NeuralError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))?;
    let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(NeuralError::VersionMismatch {
            found: version,
            supported: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))?;
    manifest.config.validate()?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, NeuralError> {
    let manifest = load_manifest(dir)?;
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(io(&path))?;
    let model = decode_weights(&bytes, &manifest.config)?;
    Ok(Checkpoint { manifest, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_model, OutputHead};
    use ndarray::Array2;

    fn fixture() -> (MlpModel, Manifest) {
        let config = MlpConfig::new(3, vec![5, 4], 2, OutputHead::Sigmoid).unwrap();
        let model = init_model(&config, 9).unwrap();
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            task: Task::Classifier,
            config,
            feature_columns: vec!["a".into(), "b".into(), "c".into()],
            encoded_feature_columns: vec!["a".into(), "b".into(), "c".into()],
            target_columns: vec!["t0".into(), "t1".into()],
            scalers_fingerprint: "abc".into(),
            objective: Some(0.25),
            trial_number: Some(1),
        };
        (model, manifest)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (model, manifest) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        save_checkpoint(&model, &manifest, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.manifest, manifest);
        for (a, b) in loaded.model.layers.iter().zip(&model.layers) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.37);
        let p = model.forward(x.view()).unwrap();
        let q = loaded.model.forward(x.view()).unwrap();
        assert!(p.iter().zip(q.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn overwrite_replaces_existing() {
        let (model, manifest) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        save_checkpoint(&model, &manifest, &path).unwrap();
        let mut m2 = manifest.clone();
        m2.objective = Some(0.1);
        save_checkpoint(&model, &m2, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().manifest.objective, Some(0.1));
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn truncated_blob_is_corrupt() {
        let (model, manifest) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        save_checkpoint(&model, &manifest, &path).unwrap();
        let weights = path.join(WEIGHTS_FILE);
        let bytes = fs::read(&weights).unwrap();
        fs::write(&weights, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NeuralError::CorruptWeights(_))));
        fs::write(&weights, [&bytes[..], &[0u8; 8]].concat()).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NeuralError::CorruptWeights(_))));
    }

    #[test]
    fn future_version_rejected() {
        let (model, mut manifest) = fixture();
        manifest.format_version = CHECKPOINT_FORMAT_VERSION + 1;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        save_checkpoint(&model, &manifest, &path).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NeuralError::VersionMismatch { .. })));

        let mut bytes = encode_weights(&model);
        bytes[4] = 99;
        assert!(matches!(
            decode_weights(&bytes, &model.config),
            Err(NeuralError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn shape_table_must_match_manifest() {
        let (model, _) = fixture();
        let other = MlpConfig::new(3, vec![5, 5], 2, OutputHead::Sigmoid).unwrap();
        assert!(matches!(
            decode_weights(&encode_weights(&model), &other),
            Err(NeuralError::CorruptWeights(_))
        ));
    }
}
