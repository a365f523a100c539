use std::collections::HashMap;

use axum::http::StatusCode;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use enerfit_core::domain::{validate_pv_features, validate_retrofit_features, Task};
use enerfit_core::evaluate::DECISION_THRESHOLD;
use enerfit_core::ingest::{Cell, ScalerSet};
use enerfit_core::neural::Checkpoint;
use enerfit_core::orchestrate::Service;

/// A deployed checkpoint bound for the lifetime of one request.
#[derive(Debug)]
pub struct LoadedModel {
    pub service: Service,
    pub version: String,
    pub checkpoint: Checkpoint,
    pub scalers: ScalerSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub prediction_id: String,
    pub service: Service,
    pub model_version: String,
    /// Validated inputs under their canonical names.
    pub inputs: Map<String, Value>,
    /// Booleans for retrofit, numbers in raw units for PV.
    pub outputs: Map<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Map<String, Value>>,
    pub imputed_fields: Vec<String>,
    pub timestamp: DateTime<Utc>,
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

/// Typed cells by column, the normalized input echo and the imputed fields.
type InputCells = (HashMap<&'static str, Cell>, Map<String, Value>, Vec<String>);

/// Parses and validates a request body into named cells plus the inputs
/// echo and the list of imputed fields.
fn input_cells(service: Service, body: &Map<String, Value>) -> Result<InputCells, ApiError> {
    let mut cells = HashMap::new();
    let mut imputed = Vec::new();
    let echo = match service {
        Service::Retrofit => {
            let f = validate_retrofit_features(body)?;
            cells.insert("building_total_area", Cell::Number(f.building_total_area));
            cells.insert("above_ground_floors", Cell::Number(f64::from(f.above_ground_floors)));
            cells.insert("energy_consumption_before", Cell::Number(f.energy_consumption_before));
            cells.insert("initial_energy_class", Cell::Class(f.initial_energy_class));
            cells.insert("energy_class_after", Cell::Class(f.energy_class_after));
            serde_json::to_value(&f)
        }
        Service::Pv => {
            let f = validate_pv_features(body)?;
            cells.insert("average_electricity_price", Cell::Number(f.average_electricity_price));
            cells.insert("average_monthly_consumption_before", Cell::Number(f.average_monthly_consumption_before));
            cells.insert("installation_cost", Cell::Number(f.installation_cost));
            cells.insert("current_inverter_set_power", Cell::Number(f.current_inverter_set_power));
            cells.insert("planned_inverter_set_power", Cell::Number(f.planned_inverter_set_power));
            cells.insert(
                "average_energy_generated",
                f.average_energy_generated.map_or(Cell::Missing, Cell::Number),
            );
            cells.insert("region", Cell::Category(f.region.as_str().to_string()));
            if f.needs_imputation() {
                imputed.push("average_energy_generated".to_string());
            }
            serde_json::to_value(&f)
        }
    };
    let echo = match echo {
        Ok(Value::Object(m)) => m,
        _ => return Err(ApiError::internal("inputs do not serialize to an object")),
    };
    Ok((cells, echo, imputed))
}

/// Content-derived id: the same inputs against the same model version give
/// the same id.
fn prediction_id(service: Service, version: &str, inputs: &Map<String, Value>) -> String {
    let mut h = Sha256::new();
    h.update(service.name().as_bytes());
    h.update([0]);
    h.update(version.as_bytes());
    h.update([0]);
    h.update(Value::Object(inputs.clone()).to_string().as_bytes());
    h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
}

pub fn predict(model: &LoadedModel, body: &Value) -> Result<PredictionResponse, ApiError> {
    let Value::Object(body) = body else {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "InvalidType",
            "request body must be a JSON object",
        ));
    };
    let service = model.service;
    let (mut cells, inputs, imputed_fields) = input_cells(service, body)?;
    let scalers = &model.scalers;
    let ordered: Vec<Cell> = scalers
        .feature_names()
        .iter()
        .map(|n| {
            cells
                .remove(n.as_str())
                .ok_or_else(|| ApiError::internal(format!("model expects unknown feature `{n}`")))
        })
        .collect::<Result<_, _>>()?;
    let encoded = scalers.transform_features(&ordered)?;
    let x = ndarray::Array2::from_shape_vec((1, encoded.len()), encoded).map_err(|e| ApiError::internal(e.to_string()))?;
    let out = model
        .checkpoint
        .model
        .forward(x.view())
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let row: Vec<f64> = out.row(0).to_vec();
    let names = scalers.target_names();
    let index = |target: &str| names.iter().position(|n| n == target);

    let mut outputs = Map::new();
    let mut probabilities = None;
    match scalers.task {
        Task::Classifier => {
            let mut probs = Map::new();
            for &t in service.target_names() {
                let p = row[index(t).ok_or_else(|| ApiError::internal(format!("model lacks target `{t}`")))?];
                outputs.insert(t.to_string(), Value::Bool(p >= DECISION_THRESHOLD));
                probs.insert(t.to_string(), number(p.clamp(0.0, 1.0)));
            }
            probabilities = Some(probs);
        }
        Task::Regressor => {
            let raw = scalers.unscale_targets(&row);
            for &t in service.target_names() {
                let v = raw[index(t).ok_or_else(|| ApiError::internal(format!("model lacks target `{t}`")))?];
                outputs.insert(t.to_string(), number(v));
            }
        }
    }
    Ok(PredictionResponse {
        prediction_id: prediction_id(service, &model.version, &inputs),
        service,
        model_version: model.version.clone(),
        inputs,
        outputs,
        probabilities,
        imputed_fields,
        timestamp: Utc::now(),
    })
}
