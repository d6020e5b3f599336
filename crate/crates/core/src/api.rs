// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! JSON bodies of the HTTP control API. Binary fields travel as standard
//! base64.

use serde::{Deserialize, Serialize};

use crate::node::{Invocation, InvokeError};
use crate::runtime::{ResourceLimits, StateMode};

pub mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(b: &[u8]) -> String {
        STANDARD.encode(b)
    }

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(b: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
            match b {
                Some(b) => s.serialize_some(&STANDARD.encode(b)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployRequest {
    pub name: String,
    #[serde(with = "b64")]
    pub module: Vec<u8>,
    #[serde(default)]
    pub state_mode: StateMode,
    #[serde(default)]
    pub limits: Option<ResourceLimits>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployResponse {
    pub name: String,
    pub handlers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvokeRequest {
    /// An actor id, or otherwise a handler name.
    pub target: String,
    #[serde(with = "b64", default)]
    pub payload: Vec<u8>,
    #[serde(default)]
    pub wait: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvokeResponse {
    pub message_id: String,
    pub decision: String,
    pub actor_id: Option<String>,
    pub node: Option<String>,
    #[serde(with = "b64::option", default)]
    pub output: Option<Vec<u8>>,
    pub latency_ms: f64,
}

impl From<&Invocation> for InvokeResponse {
    fn from(inv: &Invocation) -> Self {
        Self {
            message_id: inv.message_id.to_string(),
            decision: inv.decision.kind().to_owned(),
            actor_id: inv.decision.actor().map(|a| a.actor_id.to_string()),
            node: inv.decision.node().map(|n| n.to_string()),
            output: inv.output.as_ref().map(|b| b.to_vec()),
            latency_ms: inv.latency.as_secs_f64() * 1e3,
        }
    }
}

/// Error body for every non-2xx response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ApiError {
    Invoke(InvokeError),
    ModuleInvalid { message: String },
    BadRequest { message: String },
    ShuttingDown,
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Invoke(e) => write!(f, "{e}"),
            Self::ModuleInvalid { message } => write!(f, "invalid module: {message}"),
            Self::BadRequest { message } => write!(f, "bad request: {message}"),
            Self::ShuttingDown => f.write_str("shutting down"),
        }
    }
}

impl std::error::Error for ApiError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bodies_round_trip() {
        let d = DeployRequest {
            name: "echo".into(),
            module: vec![0, 97, 115, 109],
            state_mode: StateMode::External,
            limits: None,
        };
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains(r#""module":"AGFzbQ==""#), "{json}");
        assert!(json.contains(r#""state_mode":"EXTERNAL""#), "{json}");
        assert_eq!(serde_json::from_str::<DeployRequest>(&json).unwrap(), d);

        let r: InvokeRequest = serde_json::from_str(r#"{"target":"echo"}"#).unwrap();
        assert_eq!((r.payload.len(), r.wait), (0, false));

        let e = ApiError::Invoke(InvokeError::NoRoute("x".into()));
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<ApiError>(&json).unwrap(), e);
    }
}
