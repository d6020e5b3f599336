// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Thin client for the goldfish HTTP control API.

use std::time::Duration;

use async_trait::async_trait;
use bytes::Bytes;
use goldfish_core::api::{ApiError, DeployRequest, DeployResponse, InvokeRequest, InvokeResponse};
use goldfish_core::bench::{BenchError, Invoker};
use goldfish_core::node::ShutdownReport;
use goldfish_core::runtime::HandlerSpec;
use goldfish_core::Target;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_ADDR: &str = "http://127.0.0.1:7878";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error("cannot reach {url}: {source}")]
    Transport { url: String, source: reqwest::Error },
    #[error("unexpected response {status} from {url}: {body}")]
    Protocol { url: String, status: u16, body: String },
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is a URL like `http://127.0.0.1:7878`; a bare `host:port` is
    /// accepted too.
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let base = if base.contains("://") {
            base.trim_end_matches('/').to_owned()
        } else {
            format!("http://{}", base.trim_end_matches('/'))
        };
        let http = reqwest::Client::builder()
            .pool_max_idle_per_host(256)
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|source| ClientError::Transport {
                url: base.clone(),
                source,
            })?;
        Ok(Self { base, http })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn send<T: DeserializeOwned>(&self, req: reqwest::RequestBuilder, url: String) -> Result<T, ClientError> {
        let transport = |source| ClientError::Transport { url: url.clone(), source };
        let resp = req.send().await.map_err(transport)?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(transport)?;
        if status.is_success() {
            return serde_json::from_slice(&body).map_err(|e| ClientError::Protocol {
                url: url.clone(),
                status: status.as_u16(),
                body: e.to_string(),
            });
        }
        match serde_json::from_slice::<ApiError>(&body) {
            Ok(e) => Err(e.into()),
            Err(_) => Err(ClientError::Protocol {
                url,
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).into_owned(),
            }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        self.send(self.http.post(&url).json(body), url).await
    }

    pub async fn deploy(&self, req: &DeployRequest) -> Result<DeployResponse, ClientError> {
        self.post("/v1/deploy", req).await
    }

    pub async fn deploy_spec(&self, spec: &HandlerSpec) -> Result<DeployResponse, ClientError> {
        self.deploy(&DeployRequest {
            name: spec.name.clone(),
            module: spec.module_binary.to_vec(),
            state_mode: spec.state_mode,
            limits: Some(spec.limits),
        })
        .await
    }

    pub async fn invoke(&self, target: &str, payload: &[u8], wait: bool) -> Result<InvokeResponse, ClientError> {
        let req = InvokeRequest {
            target: target.to_owned(),
            payload: payload.to_vec(),
            wait,
        };
        self.post("/v1/invoke", &req).await
    }

    /// Cluster status as loosely typed JSON.
    pub async fn status(&self) -> Result<serde_json::Value, ClientError> {
        let url = format!("{}/v1/status", self.base);
        self.send(self.http.get(&url), url).await
    }

    pub async fn shutdown(&self) -> Result<ShutdownReport, ClientError> {
        self.post("/v1/shutdown", &serde_json::json!({})).await
    }
}

#[async_trait]
impl Invoker for Client {
    async fn deploy(&self, spec: HandlerSpec) -> Result<(), BenchError> {
        self.deploy_spec(&spec)
            .await
            .map(|_| ())
            .map_err(|e| BenchError::Deploy(e.to_string()))
    }

    async fn call(&self, target: Target, payload: Bytes) -> Result<Bytes, BenchError> {
        let r = self
            .invoke(&target.to_string(), &payload, true)
            .await
            .map_err(|e| BenchError::Aborted(e.to_string()))?;
        Ok(r.output.map(Bytes::from).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_url_forms() {
        assert_eq!(Client::new("127.0.0.1:1").unwrap().base_url(), "http://127.0.0.1:1");
        assert_eq!(Client::new("http://h:2/").unwrap().base_url(), "http://h:2");
    }
}
