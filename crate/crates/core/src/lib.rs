// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Serverless actors that keep short-term state in memory between
//! invocations.
//!
//! A node is a [`middleware::Middleware`] that routes messages, a
//! [`buffer::Buffer`] that queues them for busy actors, and a
//! [`dispatcher::Dispatcher`] that runs actor cells through the
//! [`lifecycle`] state machine. Handlers are WebAssembly modules executed by
//! [`runtime`]. A [`node::Cluster`] wires one or more nodes to a shared
//! [`store`].

pub mod abi;
pub mod api;
pub mod bench;
pub mod buffer;
pub mod clock;
pub mod frames;
pub mod dispatcher;
pub mod guests;
pub mod ids;
pub mod lifecycle;
pub mod message;
pub mod middleware;
pub mod node;
pub mod records;
pub mod runtime;
pub mod store;
pub mod trace;
pub mod wire;

pub use ids::{ActorId, MessageId, NodeAddr};
pub use lifecycle::{LifecycleEvent, LifecyclePhase};
pub use message::{Directive, Message, Target};
pub use node::{Cluster, ClusterConfig, InvokeError};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}
