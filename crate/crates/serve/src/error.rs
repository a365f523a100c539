use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use enerfit_core::config::ConfigError;
use enerfit_core::domain::DomainError;
use enerfit_core::ingest::IngestError;
use enerfit_core::orchestrate::OrchestrateError;

/// Uniform error body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{status}: {}", problem.message)]
pub struct ApiError {
    pub status: StatusCode,
    pub problem: Problem,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            problem: Problem {
                code: code.to_string(),
                message: message.into(),
                field: None,
            },
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.problem.field = Some(field.into());
        self
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or invalid API key")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.problem)).into_response()
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let code = match &e {
            DomainError::MissingField(_) => "MissingField",
            DomainError::OutOfRange(_) => "OutOfRange",
            DomainError::InvalidType(_) => "InvalidType",
            DomainError::UnknownField(_) => "UnknownField",
            DomainError::UnknownClass { .. } => "UnknownClass",
            DomainError::UnknownColumn(_) => "UnknownColumn",
            DomainError::InvalidSchema(_) => "InvalidSchema",
        };
        let field = e.field().map(str::to_string);
        let err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string());
        match field {
            Some(f) => err.with_field(f),
            None => err,
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        match e.root() {
            IngestError::UnseenCategory { column, .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "UnseenCategory", e.to_string()).with_field(column.clone())
            }
            IngestError::MissingValue(column) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "MissingValue", e.to_string()).with_field(column.clone())
            }
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        let code = match &e {
            ConfigError::MissingField(_) => "MissingField",
            ConfigError::UnknownField(_) => "UnknownField",
            ConfigError::Inconsistent { .. } => "Inconsistent",
            ConfigError::Invalid { .. } => "InvalidConfig",
            ConfigError::Parse(_) => "ParseError",
        };
        let field = e.field().map(str::to_string);
        let err = Self::new(StatusCode::BAD_REQUEST, code, e.to_string());
        match field {
            Some(f) => err.with_field(f),
            None => err,
        }
    }
}

impl From<OrchestrateError> for ApiError {
    fn from(e: OrchestrateError) -> Self {
        match &e {
            OrchestrateError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "NotFound", e.to_string()),
            OrchestrateError::MissingArtifact { dependency, .. } => {
                Self::new(StatusCode::BAD_REQUEST, "MissingArtifact", e.to_string()).with_field(dependency.clone())
            }
            OrchestrateError::NoSteps => Self::new(StatusCode::BAD_REQUEST, "NoSteps", e.to_string()).with_field("steps"),
            OrchestrateError::Config(c) => c.clone().into(),
            _ => Self::internal(e.to_string()),
        }
    }
}
