// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! One actor cell: its channel, the short-term state slot, and handler
//! invocation through the sandbox host.

mod host;

use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

pub use host::{GuestRun, PreparedHandler, WasmHost, SEND_BAD_TARGET, SEND_OK, SEND_TOO_LARGE};

use crate::abi::Outbound;
use crate::ids::ActorId;
use crate::lifecycle::{Lifecycle, LifecycleEvent};
use crate::message::{Directive, Message};
use crate::records::state_key;
use crate::store::{SharedStore, StoreError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub max_memory_bytes: usize,
    #[serde(with = "millis")]
    pub max_duration: Duration,
    /// Largest payload a guest may send to another actor.
    pub max_payload_bytes: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            max_memory_bytes: 64 * 1024 * 1024,
            max_duration: Duration::from_secs(30),
            max_payload_bytes: 16 * 1024 * 1024,
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Where a handler keeps the state it carries between invocations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateMode {
    /// In the actor's channel slot, for as long as the actor lives.
    #[default]
    InActor,
    /// Round-tripped through the external state store on every invocation.
    External,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandlerSpec {
    pub name: String,
    pub module_binary: Bytes,
    pub limits: ResourceLimits,
    pub state_mode: StateMode,
}

impl HandlerSpec {
    pub fn new(name: impl Into<String>, module_binary: impl Into<Bytes>) -> Self {
        Self {
            name: name.into(),
            module_binary: module_binary.into(),
            limits: ResourceLimits::default(),
            state_mode: StateMode::InActor,
        }
    }

    pub fn with_limits(mut self, limits: ResourceLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_state_mode(mut self, mode: StateMode) -> Self {
        self.state_mode = mode;
        self
    }
}

/// Short-term memory of one actor instance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActorState {
    pub bytes: Bytes,
    /// Number of completed invocations.
    pub version: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("invalid module: {0}")]
    ModuleInvalid(String),
    #[error("resource limits cannot be reserved: {0}")]
    ResourceExhausted(String),
    #[error("guest trapped: {0}")]
    GuestTrap(String),
    #[error("invocation timed out: {0}")]
    Timeout(String),
    #[error("guest ran out of memory: {0}")]
    OutOfMemory(String),
    #[error("payload of {len} bytes exceeds the {limit} byte limit")]
    PayloadTooLarge { len: usize, limit: usize },
    #[error("actor terminated")]
    ActorTerminated,
    #[error("external state unavailable: {0}")]
    State(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl From<StoreError> for RuntimeError {
    fn from(e: StoreError) -> Self {
        Self::State(e.to_string())
    }
}

/// A dedicated inbox plus the slot holding the actor's state.
///
/// The slot is shared with the owning worker; readers only ever receive a copy.
#[derive(Clone, Debug)]
pub struct Channel {
    pub channel_id: String,
    pub actor_id: ActorId,
    slot: Arc<Mutex<Option<ActorState>>>,
    inbox: mpsc::Sender<Message>,
}

impl Channel {
    /// Enqueues a message; fails when the inbox is full or closed.
    pub fn send(&self, msg: Message) -> Result<(), Message> {
        self.inbox.try_send(msg).map_err(|e| match e {
            mpsc::error::TrySendError::Full(m) | mpsc::error::TrySendError::Closed(m) => m,
        })
    }

    fn current(&self) -> Result<ActorState, RuntimeError> {
        self.slot.lock().clone().ok_or(RuntimeError::ActorTerminated)
    }

    fn replace(&self, state: ActorState) -> Result<(), RuntimeError> {
        let mut slot = self.slot.lock();
        match slot.as_mut() {
            Some(s) => {
                *s = state;
                Ok(())
            }
            None => Err(RuntimeError::ActorTerminated),
        }
    }

    /// Drops the state; later reads fail with `ActorTerminated`.
    pub fn destroy(&self) {
        self.slot.lock().take();
    }

    pub fn is_destroyed(&self) -> bool {
        self.slot.lock().is_none()
    }
}

/// Snapshot of the actor's state; never a live reference into the slot.
pub fn read_state(channel: &Channel) -> Result<ActorState, RuntimeError> {
    channel.current()
}

/// What the handler produced for one message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvocationResult {
    pub output: Bytes,
    pub new_state: ActorState,
    pub directive: Directive,
    pub outbound: Vec<Outbound>,
}

/// A freshly created actor, still in CREATED until its owner acknowledges it.
#[derive(Debug)]
pub struct Cell {
    pub actor_id: ActorId,
    pub channel: Channel,
    pub inbox: mpsc::Receiver<Message>,
    pub handler: Arc<PreparedHandler>,
    pub lifecycle: Lifecycle,
}

/// A failed startup: the actor went through ERROR to TERMINATION.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct SpawnFailure {
    pub error: RuntimeError,
    pub lifecycle: Lifecycle,
}

/// Sandboxed execution of handlers for one node.
pub struct ActorRuntime {
    host: Arc<WasmHost>,
    external: Option<SharedStore>,
    inbox_backlog: usize,
}

impl ActorRuntime {
    pub fn new(external: Option<SharedStore>) -> Result<Self, RuntimeError> {
        Ok(Self {
            host: Arc::new(WasmHost::new()?),
            external,
            inbox_backlog: 4,
        })
    }

    pub fn host(&self) -> &WasmHost {
        &self.host
    }

    pub fn external_store(&self) -> Option<&SharedStore> {
        self.external.as_ref()
    }

    pub fn prepare(&self, spec: &HandlerSpec) -> Result<Arc<PreparedHandler>, RuntimeError> {
        self.host.prepare(spec)
    }

    pub fn spawn_cell(&self, spec: &HandlerSpec) -> Result<Cell, SpawnFailure> {
        self.spawn_cell_with_id(ActorId::new(), spec)
    }

    /// Creates the cell in CREATED with empty state (version 0). On a module
    /// that fails validation the lifecycle is driven to TERMINATION.
    pub fn spawn_cell_with_id(&self, actor_id: ActorId, spec: &HandlerSpec) -> Result<Cell, SpawnFailure> {
        let mut lifecycle = Lifecycle::new();
        let prepared = self.host.prepare(spec).and_then(|h| {
            if h.spec.state_mode == StateMode::External && self.external.is_none() {
                Err(RuntimeError::ResourceExhausted("no external state store configured".into()))
            } else {
                Ok(h)
            }
        });
        let handler = match prepared {
            Ok(h) => h,
            Err(error) => {
                let _ = lifecycle.fire(LifecycleEvent::Failure);
                let _ = lifecycle.fire(LifecycleEvent::SelfDestroy);
                return Err(SpawnFailure { error, lifecycle });
            }
        };
        let (tx, rx) = mpsc::channel(1 + self.inbox_backlog);
        let channel = Channel {
            channel_id: actor_id.channel_id(),
            actor_id,
            slot: Arc::new(Mutex::new(Some(ActorState::default()))),
            inbox: tx,
        };
        Ok(Cell {
            actor_id,
            channel,
            inbox: rx,
            handler,
            lifecycle,
        })
    }

    /// Runs the handler on one message: fresh sandbox, prior state in, new
    /// state out. The state slot is updated only on success.
    pub async fn invoke(
        &self,
        handler: &Arc<PreparedHandler>,
        channel: &Channel,
        msg: &Message,
    ) -> Result<InvocationResult, RuntimeError> {
        let prior = channel.current()?;
        let (state_in, external_version) = match handler.spec.state_mode {
            StateMode::InActor => (prior.bytes.clone(), None),
            StateMode::External => {
                let store = self.external.as_ref().ok_or(RuntimeError::ActorTerminated)?;
                match store.get(&state_key(&handler.spec.name)).await {
                    Ok(rec) => (rec.value, Some(rec.version)),
                    Err(StoreError::NotFound) => (Bytes::new(), Some(0)),
                    Err(e) => return Err(e.into()),
                }
            }
        };

        let run = {
            let handler = handler.clone();
            let payload = msg.payload.clone();
            let host = self.host.clone();
            run_blocking(move || host.run(&handler, &state_in, &payload)).await?
        };

        let new_bytes = run.output.new_state.clone();
        if let (Some(mut version), Some(store)) = (external_version, self.external.as_ref()) {
            let key = state_key(&handler.spec.name);
            // Last writer wins across concurrent instances.
            loop {
                match store.put_cas(&key, new_bytes.clone(), version).await {
                    Ok(_) => break,
                    Err(StoreError::CasConflict { current }) => version = current,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let new_state = ActorState {
            bytes: match handler.spec.state_mode {
                StateMode::InActor => new_bytes,
                StateMode::External => Bytes::new(),
            },
            version: prior.version + 1,
        };
        channel.replace(new_state.clone())?;
        Ok(InvocationResult {
            output: run.output.output,
            new_state,
            directive: run.output.directive,
            outbound: run.outbound,
        })
    }
}

async fn run_blocking<F>(f: F) -> Result<GuestRun, RuntimeError>
where
    F: FnOnce() -> Result<GuestRun, RuntimeError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| RuntimeError::Internal(e.to_string()))?
}
