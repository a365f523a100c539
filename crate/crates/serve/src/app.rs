use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::auth::ApiKeys;
use crate::error::ApiError;
use crate::predict::{predict, LoadedModel, PredictionResponse};
use crate::report::prediction_csv;
use enerfit_core::config::validate_run_config;
use enerfit_core::orchestrate::{ArtifactStore, OrchestrateError, Orchestrator, Registry, Service, Step};

pub const DEFAULT_RETENTION: usize = 1000;

/// Shared state behind every handler.
pub struct AppState {
    pub registry: Registry,
    pub orchestrator: Arc<Orchestrator>,
    keys: ApiKeys,
    models: RwLock<HashMap<Service, Arc<LoadedModel>>>,
    predictions: Mutex<VecDeque<PredictionResponse>>,
    retention: usize,
}

impl AppState {
    pub fn new(artifact_root: impl Into<PathBuf>, keys: ApiKeys, retention: usize) -> Result<Self, OrchestrateError> {
        let store = ArtifactStore::new(artifact_root)?;
        Ok(Self {
            registry: Registry::new(store.registry_dir()),
            orchestrator: Arc::new(Orchestrator::new(store)),
            keys,
            models: RwLock::new(HashMap::new()),
            predictions: Mutex::new(VecDeque::new()),
            retention: retention.max(1),
        })
    }

    /// The active checkpoint for `service`. Each call returns one immutable
    /// snapshot, so a concurrent deploy never changes a model mid-request.
    pub fn bind_model(&self, service: Service) -> Result<Arc<LoadedModel>, ApiError> {
        let no_model = || {
            ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "NoModelDeployed",
                format!("no {service} model is deployed"),
            )
        };
        let active = self.registry.active_version(service).map_err(|e| ApiError::internal(e.to_string()))?;
        let Some(active) = active else { return Err(no_model()) };
        if let Some(m) = self.models.read().unwrap_or_else(|e| e.into_inner()).get(&service) {
            if m.version == active {
                return Ok(Arc::clone(m));
            }
        }
        let (version, checkpoint, scalers) = self
            .registry
            .load_active(service)
            .map_err(|e| ApiError::internal(e.to_string()))?
            .ok_or_else(no_model)?;
        let model = Arc::new(LoadedModel {
            service,
            version,
            checkpoint,
            scalers,
        });
        self.models
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(service, Arc::clone(&model));
        Ok(model)
    }

    fn remember(&self, p: &PredictionResponse) {
        let mut ring = self.predictions.lock().unwrap_or_else(|e| e.into_inner());
        ring.retain(|q| q.prediction_id != p.prediction_id);
        if ring.len() >= self.retention {
            ring.pop_front();
        }
        ring.push_back(p.clone());
    }

    pub fn stored_prediction(&self, id: &str) -> Option<PredictionResponse> {
        let ring = self.predictions.lock().unwrap_or_else(|e| e.into_inner());
        ring.iter().rev().find(|p| p.prediction_id == id).cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/retrofit/predict", post(predict_retrofit))
        .route("/api/v1/pv/predict", post(predict_pv))
        .route("/api/v1/retrofit/report", get(report_retrofit))
        .route("/api/v1/pv/report", get(report_pv))
        .route("/api/v1/models", get(list_models))
        .route("/api/v1/runs", post(launch_run))
        .route("/api/v1/runs/{id}", get(run_status))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(Arc::clone(&state), require_key))
        .with_state(state)
}

async fn require_key(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let header = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok());
    if !state.keys.accepts(header) {
        return ApiError::unauthorized().into_response();
    }
    next.run(request).await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

fn parse_json(body: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidJson", e.to_string()))
}

async fn run_prediction(state: Arc<AppState>, service: Service, body: Bytes) -> Result<Json<PredictionResponse>, ApiError> {
    let body = parse_json(&body)?;
    let response = tokio::task::spawn_blocking(move || {
        let model = state.bind_model(service)?;
        let response = predict(&model, &body)?;
        state.remember(&response);
        Ok::<_, ApiError>(response)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(response))
}

async fn predict_retrofit(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<PredictionResponse>, ApiError> {
    run_prediction(state, Service::Retrofit, body).await
}

async fn predict_pv(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<PredictionResponse>, ApiError> {
    run_prediction(state, Service::Pv, body).await
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    run: Option<String>,
    format: Option<String>,
}

fn report(state: &AppState, service: Service, q: ReportQuery) -> Result<Response, ApiError> {
    let format = q.format.as_deref().unwrap_or("csv");
    if !format.eq_ignore_ascii_case("csv") {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "UnsupportedFormat",
            format!("format `{format}` is not supported; use csv"),
        )
        .with_field("format"));
    }
    let id = q
        .run
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "MissingField", "query parameter `run` is required").with_field("run"))?;
    let prediction = state
        .stored_prediction(&id)
        .filter(|p| p.service == service)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no stored {service} prediction `{id}`")))?;
    let disposition = format!("attachment; filename=\"{service}_report_{id}.csv\"");
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        prediction_csv(&prediction),
    )
        .into_response())
}

async fn report_retrofit(State(state): State<Arc<AppState>>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    report(&state, Service::Retrofit, q)
}

async fn report_pv(State(state): State<Arc<AppState>>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    report(&state, Service::Pv, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub service: Service,
    pub version: String,
    pub active: bool,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelList {
    pub models: Vec<ModelEntry>,
}

async fn list_models(State(state): State<Arc<AppState>>) -> Result<Json<ModelList>, ApiError> {
    let mut models = Vec::new();
    for service in Service::ALL {
        for v in state.registry.list_versions(service)? {
            models.push(ModelEntry {
                service,
                version: v.version,
                active: v.active,
                objective: v.objective,
            });
        }
    }
    Ok(Json(ModelList { models }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchResponse {
    pub run_id: String,
}

/// Body: the run config keys, plus an optional `steps` list (all steps when
/// absent).
async fn launch_run(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let Value::Object(mut raw) = parse_json(&body)? else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidType", "body must be a JSON object"));
    };
    let steps = match raw.remove("steps") {
        None => Step::ALL.to_vec(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().and_then(|s| s.parse::<Step>().ok()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "InvalidStep", "unknown step").with_field("steps"))?,
        Some(_) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidType", "steps must be a list").with_field("steps"))
        }
    };
    let config = validate_run_config(&raw)?;
    let orchestrator = Arc::clone(&state.orchestrator);
    let run_id = tokio::task::spawn_blocking(move || orchestrator.launch(config, &steps))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::ACCEPTED, Json(LaunchResponse { run_id })).into_response())
}

async fn run_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let record = state.orchestrator.run_status(&id)?;
    Ok(Json(record).into_response())
}
