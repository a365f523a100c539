//! Pipeline run configuration.
//!
//! Keys match the launchpad names verbatim (`l_rate`, `mlClass`, ...).
//! Documents may be YAML or JSON; list-valued keys also accept a
//! comma-separated string such as `"256, 512, 1024"`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{DatasetSchema, DomainError, Task};
use crate::ingest::ConnectorConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("mlClass {ml_class} is inconsistent with target columns {targets:?}")]
    Inconsistent { ml_class: String, targets: Vec<String> },
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot parse config document: {0}")]
    Parse(String),
}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::MissingField(f) | ConfigError::UnknownField(f) => Some(f),
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Inconsistent { .. } => Some("mlClass"),
            ConfigError::Parse(_) => None,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input_filepath: String,
    pub authorization: Option<String>,
    pub consumer_agent_id: Option<String>,
    pub provider_agent_id: Option<String>,
    pub feature_cols: Vec<String>,
    pub target_cols: Vec<String>,
    #[serde(rename = "mlClass")]
    pub ml_class: Task,
    pub activation: String,
    pub optimizer_name: String,
    pub batch_size: Vec<usize>,
    pub l_rate: [f64; 2],
    pub layer_sizes: Vec<usize>,
    pub n_layers: [usize; 2],
    pub max_epochs: usize,
    pub n_trials: usize,
    pub num_workers: usize,
    pub seed: u64,
    pub ml_path: String,
    pub scalers_path: String,
    pub optuna_viz: String,
    pub split_ratio: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub warmup_trials: usize,
    pub warmup_epochs: usize,
    pub from_run: Option<String>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "input_filepath",
    "authorization",
    "consumer_agent_id",
    "provider_agent_id",
    "feature_cols",
    "target_cols",
    "mlClass",
    "activation",
    "optimizer_name",
    "batch_size",
    "l_rate",
    "layer_sizes",
    "n_layers",
    "max_epochs",
    "n_trials",
    "num_workers",
    "seed",
    "ml_path",
    "scalers_path",
    "optuna_viz",
    "split_ratio",
    "patience",
    "min_delta",
    "warmup_trials",
    "warmup_epochs",
    "from_run",
];

struct Fields<'a>(&'a Map<String, Value>);

impl Fields<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key).filter(|v| !v.is_null())
    }

    fn string(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) if s.trim().is_empty() => Err(invalid(key, "must be non-empty")),
            Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(_) => Err(invalid(key, "expected a string")),
        }
    }

    fn required_string(&self, key: &str) -> Result<String, ConfigError> {
        self.string(key)?.ok_or_else(|| ConfigError::MissingField(key.into()))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<Value>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => Ok(Some(items.clone())),
            Some(Value::String(s)) => Ok(Some(
                s.split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(|p| {
                        serde_json::from_str::<Value>(p).unwrap_or_else(|_| Value::String(p.into()))
                    })
                    .collect(),
            )),
            Some(v @ Value::Number(_)) => Ok(Some(vec![v.clone()])),
            Some(_) => Err(invalid(key, "expected a list")),
        }
    }

    fn strings(&self, key: &str) -> Result<Option<Vec<String>>, ConfigError> {
        let Some(items) = self.list(key)? else { return Ok(None) };
        let out = items
            .into_iter()
            .map(|v| match v {
                Value::String(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
                _ => Err(invalid(key, "expected a list of names")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if out.is_empty() {
            return Err(invalid(key, "must not be empty"));
        }
        Ok(Some(out))
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(items) = self.list(key)? else { return Ok(None) };
        items
            .into_iter()
            .map(|v| as_f64(&v).filter(|x| x.is_finite()).ok_or_else(|| invalid(key, "expected numbers")))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn uints(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(values) = self.floats(key)? else { return Ok(None) };
        values
            .into_iter()
            .map(|x| {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(invalid(key, "expected non-negative integers"))
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_f64(v)
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| invalid(key, "expected a number")),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) if n.as_u64().is_some() => Ok(n.as_u64()),
            Some(Value::String(s)) => s
                .trim()
                .parse::<u64>()
                .map(Some)
                .map_err(|_| invalid(key, "expected a non-negative integer")),
            Some(_) => Err(invalid(key, "expected a non-negative integer")),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn pair<T: Copy>(key: &str, values: Vec<T>) -> Result<[T; 2], ConfigError> {
    match values.as_slice() {
        [a] => Ok([*a, *a]),
        [a, b] => Ok([*a, *b]),
        _ => Err(invalid(key, "expected one value or a [low, high] pair")),
    }
}

fn parse_task(text: &str) -> Result<Task, ConfigError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "classifier" | "mlpclassifier" => Ok(Task::Classifier),
        "regressor" | "mlpregressor" => Ok(Task::Regressor),
        _ => Err(invalid("mlClass", "expected Classifier or Regressor")),
    }
}

/// Validates a raw key/value document, applying launchpad defaults.
pub fn validate_run_config(raw: &Map<String, Value>) -> Result<RunConfig, ConfigError> {
    if let Some(unknown) = raw.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownField(unknown.clone()));
    }
    let f = Fields(raw);

    let feature_cols = f.strings("feature_cols")?.ok_or_else(|| ConfigError::MissingField("feature_cols".into()))?;
    let target_cols = f.strings("target_cols")?.ok_or_else(|| ConfigError::MissingField("target_cols".into()))?;
    let ml_class = parse_task(&f.required_string("mlClass")?)?;

    let activation = f.string("activation")?.unwrap_or_else(|| "ReLU".into());
    if !activation.eq_ignore_ascii_case("relu") {
        return Err(invalid("activation", "only ReLU is supported"));
    }
    let optimizer_name = f.string("optimizer_name")?.unwrap_or_else(|| "Adam".into());
    if !optimizer_name.eq_ignore_ascii_case("adam") {
        return Err(invalid("optimizer_name", "only Adam is supported"));
    }

    let batch_size = f.uints("batch_size")?.unwrap_or_else(|| vec![256, 512, 1024]);
    if batch_size.is_empty() || batch_size.contains(&0) {
        return Err(invalid("batch_size", "choices must be positive"));
    }
    let l_rate = match f.floats("l_rate")? {
        Some(v) => pair("l_rate", v)?,
        None => [1e-4, 1e-3],
    };
    if !(l_rate[0] > 0.0 && l_rate[0] <= l_rate[1]) {
        return Err(invalid("l_rate", "expected 0 < low <= high"));
    }
    let layer_sizes = f.uints("layer_sizes")?.unwrap_or_else(|| vec![128, 256, 512, 1024, 2048]);
    if layer_sizes.is_empty() || layer_sizes.contains(&0) {
        return Err(invalid("layer_sizes", "choices must be positive"));
    }
    let n_layers = match f.uints("n_layers")? {
        Some(v) => pair("n_layers", v)?,
        None => [2, 6],
    };
    if !(n_layers[0] >= 1 && n_layers[0] <= n_layers[1]) {
        return Err(invalid("n_layers", "expected 1 <= low <= high"));
    }

    let positive = |key: &str, default: u64| -> Result<u64, ConfigError> {
        let v = f.uint(key)?.unwrap_or(default);
        if v == 0 {
            return Err(invalid(key, "must be at least 1"));
        }
        Ok(v)
    };
    let max_epochs = positive("max_epochs", 10)? as usize;
    let n_trials = positive("n_trials", 3)? as usize;
    let num_workers = f.uint("num_workers")?.unwrap_or(2) as usize;
    let seed = f.uint("seed")?.unwrap_or(42);
    let patience = positive("patience", 3)? as usize;
    let warmup_trials = f.uint("warmup_trials")?.unwrap_or(1) as usize;
    let warmup_epochs = f.uint("warmup_epochs")?.unwrap_or(1) as usize;
    let min_delta = f.float("min_delta")?.unwrap_or(0.0);
    if min_delta < 0.0 {
        return Err(invalid("min_delta", "must be non-negative"));
    }
    let split_ratio = f.float("split_ratio")?.unwrap_or(0.8);
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(invalid("split_ratio", "must lie strictly between 0 and 1"));
    }

    let config = RunConfig {
        input_filepath: f.required_string("input_filepath")?,
        authorization: f.string("authorization")?,
        consumer_agent_id: f.string("consumer_agent_id")?,
        provider_agent_id: f.string("provider_agent_id")?,
        feature_cols,
        target_cols,
        ml_class,
        activation: "ReLU".into(),
        optimizer_name: "Adam".into(),
        batch_size,
        l_rate,
        layer_sizes,
        n_layers,
        max_epochs,
        n_trials,
        num_workers,
        seed,
        ml_path: f.string("ml_path")?.unwrap_or_else(|| "train/checkpoint".into()),
        scalers_path: f.string("scalers_path")?.unwrap_or_else(|| "ingest/scalers.json".into()),
        optuna_viz: f.string("optuna_viz")?.unwrap_or_else(|| "eval".into()),
        split_ratio,
        patience,
        min_delta,
        warmup_trials,
        warmup_epochs,
        from_run: f.string("from_run")?,
    };
    config.connector()?;
    config.schema()?;
    Ok(config)
}

impl RunConfig {
    /// Dataset schema implied by the column lists and `mlClass`.
    pub fn schema(&self) -> Result<DatasetSchema, ConfigError> {
        DatasetSchema::from_names(&self.feature_cols, &self.target_cols, self.ml_class).map_err(|e| match e {
            DomainError::UnknownColumn(c) => {
                let field = if self.target_cols.contains(&c) { "target_cols" } else { "feature_cols" };
                invalid(field, format!("unknown column `{c}`"))
            }
            DomainError::InvalidSchema(msg) if msg.starts_with("target") => ConfigError::Inconsistent {
                ml_class: self.ml_class.to_string(),
                targets: self.target_cols.clone(),
            },
            other => invalid("feature_cols", other.to_string()),
        })
    }

    /// Connector credentials, when `authorization` is configured.
    pub fn connector(&self) -> Result<Option<ConnectorConfig>, ConfigError> {
        let Some(auth) = &self.authorization else { return Ok(None) };
        let consumer = self
            .consumer_agent_id
            .clone()
            .ok_or_else(|| ConfigError::MissingField("consumer_agent_id".into()))?;
        let provider = self
            .provider_agent_id
            .clone()
            .ok_or_else(|| ConfigError::MissingField("provider_agent_id".into()))?;
        ConnectorConfig::new(auth.clone(), consumer, provider)
            .map(Some)
            .map_err(|e| invalid("authorization", e.to_string()))
    }

    pub fn to_raw(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(mut m) => {
                m.retain(|_, v| !v.is_null());
                m
            }
            _ => unreachable!(),
        }
    }
}

/// Parses a YAML or JSON document into a raw key/value map.
pub fn parse_config_document(text: &str) -> Result<Map<String, Value>, ConfigError> {
    let value: Value = serde_yaml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    match value {
        Value::Object(m) => Ok(m),
        Value::Null => Ok(Map::new()),
        _ => Err(ConfigError::Parse("top level must be a mapping".into())),
    }
}

pub fn load_config_document(path: &Path) -> Result<Map<String, Value>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    parse_config_document(&text)
}

/// Applies a `key=value` override; the value is read as a YAML scalar or
/// flow sequence. Later overrides win.
pub fn apply_override(raw: &mut Map<String, Value>, assignment: &str) -> Result<(), ConfigError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Parse(format!("override `{assignment}` has an empty key")));
    }
    let value: Value = serde_yaml::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    raw.insert(key.to_string(), value);
    Ok(())
}
