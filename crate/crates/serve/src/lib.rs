//! HTTP API for the retrofit and PV prediction services, the model list,
//! pipeline run launch and status, and CSV report export. Every route sits
//! behind API-key authentication.

mod app;
mod auth;
mod error;
mod predict;
mod report;

use std::net::SocketAddr;
use std::sync::Arc;

pub use app::{router, AppState, LaunchResponse, ModelEntry, ModelList, DEFAULT_RETENTION};
pub use auth::{ApiKeys, AuthConfigError};
pub use error::{ApiError, Problem};
pub use predict::{predict, LoadedModel, PredictionResponse};
pub use report::prediction_csv;

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
