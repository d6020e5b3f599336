// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! HTTP/JSON front end for a [`Cluster`].
//!
//! | method | path           | body              | reply            |
//! |--------|----------------|-------------------|------------------|
//! | POST   | `/v1/deploy`   | `DeployRequest`   | `DeployResponse` |
//! | POST   | `/v1/invoke`   | `InvokeRequest`   | `InvokeResponse` |
//! | GET    | `/v1/status`   |                   | cluster status   |
//! | POST   | `/v1/shutdown` |                   | `ShutdownReport` |
//!
//! A shutdown request drains the cluster, answers, then stops the listener.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use goldfish_core::api::{ApiError, DeployRequest, DeployResponse, InvokeRequest, InvokeResponse};
use goldfish_core::node::{ClusterStatus, ShutdownReport};
use goldfish_core::runtime::{HandlerSpec, RuntimeError};
use goldfish_core::{Cluster, InvokeError, Target};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tracing::info;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("address {0} is already in use")]
    PortInUse(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

struct AppError(ApiError);

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ApiError::Invoke(e) => match e {
                InvokeError::NoRoute(_) => StatusCode::NOT_FOUND,
                InvokeError::CapacityExceeded => StatusCode::TOO_MANY_REQUESTS,
                InvokeError::HopLimitExceeded => StatusCode::LOOP_DETECTED,
                InvokeError::Timeout => StatusCode::GATEWAY_TIMEOUT,
                InvokeError::ShuttingDown => StatusCode::SERVICE_UNAVAILABLE,
                InvokeError::Failed(_) => StatusCode::UNPROCESSABLE_ENTITY,
                InvokeError::Store(_) => StatusCode::BAD_GATEWAY,
            },
            ApiError::ModuleInvalid { .. } | ApiError::BadRequest { .. } => StatusCode::BAD_REQUEST,
            ApiError::ShuttingDown => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(self.0)).into_response()
    }
}

impl From<JsonRejection> for AppError {
    fn from(r: JsonRejection) -> Self {
        Self(ApiError::BadRequest { message: r.body_text() })
    }
}

#[derive(Clone)]
struct AppState {
    cluster: Arc<Cluster>,
    stop: watch::Sender<bool>,
}

pub fn router(cluster: Arc<Cluster>, stop: watch::Sender<bool>) -> Router {
    Router::new()
        .route("/v1/deploy", post(deploy))
        .route("/v1/invoke", post(invoke))
        .route("/v1/status", get(status))
        .route("/v1/shutdown", post(shutdown))
        .with_state(AppState { cluster, stop })
}

async fn deploy(
    State(app): State<AppState>,
    body: Result<Json<DeployRequest>, JsonRejection>,
) -> Result<Json<DeployResponse>, AppError> {
    let Json(req) = body?;
    if !app.cluster.is_accepting() {
        return Err(AppError(ApiError::ShuttingDown));
    }
    let mut spec = HandlerSpec::new(req.name.clone(), req.module).with_state_mode(req.state_mode);
    if let Some(limits) = req.limits {
        spec = spec.with_limits(limits);
    }
    app.cluster.deploy(spec).map_err(|e| {
        AppError(match e {
            RuntimeError::ModuleInvalid(m) => ApiError::ModuleInvalid { message: m },
            other => ApiError::BadRequest {
                message: other.to_string(),
            },
        })
    })?;
    info!(handler = %req.name, "deployed");
    Ok(Json(DeployResponse {
        name: req.name,
        handlers: app.cluster.handlers(),
    }))
}

async fn invoke(
    State(app): State<AppState>,
    body: Result<Json<InvokeRequest>, JsonRejection>,
) -> Result<Json<InvokeResponse>, AppError> {
    let Json(req) = body?;
    let inv = app
        .cluster
        .invoke(Target::parse(&req.target), req.payload, req.wait)
        .await
        .map_err(|e| AppError(ApiError::Invoke(e)))?;
    Ok(Json(InvokeResponse::from(&inv)))
}

async fn status(State(app): State<AppState>) -> Json<ClusterStatus> {
    Json(app.cluster.status().await)
}

async fn shutdown(State(app): State<AppState>) -> Json<ShutdownReport> {
    let report = app.cluster.shutdown().await;
    info!(drained = report.drained, "cluster shut down");
    let _ = app.stop.send(true);
    Json(report)
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    cluster: Arc<Cluster>,
    stop: watch::Sender<bool>,
}

impl Server {
    pub async fn bind(addr: &str, cluster: Arc<Cluster>) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(addr).await.map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => ServerError::PortInUse(addr.to_owned()),
            _ => ServerError::Bind {
                addr: addr.to_owned(),
                source: e,
            },
        })?;
        Ok(Self::from_listener(listener, cluster))
    }

    pub fn from_listener(listener: TcpListener, cluster: Arc<Cluster>) -> Self {
        let (stop, _) = watch::channel(false);
        Self { listener, cluster, stop }
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServerError> {
        Ok(self.listener.local_addr()?)
    }

    /// Flips to `true` once a shutdown request has been served.
    pub fn stopped(&self) -> watch::Receiver<bool> {
        self.stop.subscribe()
    }

    /// Serves until a shutdown request or `external` resolves. An external
    /// stop also drains the cluster.
    pub async fn run(self, external: impl std::future::Future<Output = ()> + Send + 'static) -> Result<(), ServerError> {
        let mut stopped = self.stop.subscribe();
        let cluster = self.cluster.clone();
        let app = router(self.cluster, self.stop.clone());
        let stop = self.stop;
        let signal = async move {
            tokio::select! {
                _ = async { stopped.wait_for(|s| *s).await.map(|_| ()) } => {}
                _ = external => {
                    cluster.shutdown().await;
                    let _ = stop.send(true);
                }
            }
        };
        axum::serve(self.listener, app).with_graceful_shutdown(signal).await?;
        Ok(())
    }
}
