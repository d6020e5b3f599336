// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Nodes and the cluster that wires them to a shared store.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Weak};
use std::time::Duration;

use bytes::Bytes;
use futures::future::BoxFuture;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use crate::buffer::{Buffer, BufferAction, BufferError, BufferOutcome, BufferStatus, FailReason};
use crate::clock::MonoTime;
use crate::dispatcher::{reply_message, Dispatcher, NodeConfig};
use crate::ids::{ActorId, MessageId, NodeAddr};
use crate::lifecycle::LifecyclePhase;
use crate::message::{Directive, Message, ReplyTicket, ReplyTo, Target};
use crate::middleware::{Middleware, NodeCapacity, RouteError, RoutingDecision};
use crate::records::{ActorRef, RegistryEntry, ACTOR_PREFIX};
use crate::runtime::{ActorRuntime, HandlerSpec, RuntimeError};
use crate::store::{MemoryStore, RemoteStore, SharedStore, StoreError, StoreServer, StoreStats};
use crate::trace::{SpawnReason, Trace, TraceEvent};
use crate::wire::ErrorCode;

/// In-process view of the nodes, ordered as the registry reports them.
#[derive(Default)]
pub struct Directory {
    nodes: parking_lot::RwLock<HashMap<NodeAddr, Weak<Node>>>,
    order: parking_lot::RwLock<Vec<NodeAddr>>,
}

impl Directory {
    pub fn insert(&self, node: &Arc<Node>) {
        self.nodes.write().insert(node.address().clone(), Arc::downgrade(node));
    }

    pub fn remove(&self, addr: &NodeAddr) {
        self.nodes.write().remove(addr);
    }

    pub fn get(&self, addr: &NodeAddr) -> Option<Arc<Node>> {
        self.nodes.read().get(addr).and_then(Weak::upgrade)
    }

    pub(crate) fn set_order(&self, order: Vec<NodeAddr>) {
        *self.order.write() = order;
    }

    pub fn order(&self) -> Vec<NodeAddr> {
        self.order.read().clone()
    }

    /// Spawn capacity of every reachable node, in registry order.
    pub fn capacities(&self) -> Vec<NodeCapacity> {
        let order = self.order.read();
        order
            .iter()
            .filter_map(|a| {
                self.get(a).map(|n| NodeCapacity {
                    address: a.clone(),
                    free_slots: n.buffer().free_for_spawn(),
                })
            })
            .collect()
    }
}

/// Deployed handlers, shared by all nodes.
#[derive(Default)]
pub struct HandlerRegistry {
    specs: parking_lot::RwLock<HashMap<String, Arc<HandlerSpec>>>,
}

impl HandlerRegistry {
    pub fn get(&self, name: &str) -> Option<Arc<HandlerSpec>> {
        self.specs.read().get(name).cloned()
    }

    pub fn insert(&self, spec: HandlerSpec) {
        self.specs.write().insert(spec.name.clone(), Arc::new(spec));
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.specs.read().keys().cloned().collect();
        v.sort();
        v
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum InvokeError {
    #[error("no route: {0}")]
    NoRoute(String),
    #[error("hop limit exceeded")]
    HopLimitExceeded,
    #[error("timed out waiting for a reply")]
    Timeout,
    #[error("shutting down")]
    ShuttingDown,
    #[error("capacity exceeded")]
    CapacityExceeded,
    #[error("invocation failed: {0}")]
    Failed(String),
    #[error("store: {0}")]
    Store(String),
}

impl InvokeError {
    pub fn code(&self) -> ErrorCode {
        match self {
            Self::NoRoute(_) | Self::CapacityExceeded => ErrorCode::NoRoute,
            Self::HopLimitExceeded => ErrorCode::HopLimitExceeded,
            Self::Timeout => ErrorCode::Timeout,
            Self::ShuttingDown => ErrorCode::ShuttingDown,
            Self::Failed(_) => ErrorCode::Failed,
            Self::Store(_) => ErrorCode::Internal,
        }
    }
}

impl From<RouteError> for InvokeError {
    fn from(e: RouteError) -> Self {
        match e {
            RouteError::NoRoute(m) | RouteError::SpawnFailed(m) => Self::NoRoute(m),
            RouteError::Buffer(BufferError::NoRoute(m)) => Self::NoRoute(m),
            RouteError::Buffer(BufferError::CapacityExceeded) => Self::CapacityExceeded,
            RouteError::Buffer(e @ BufferError::UnknownMessage(_)) => Self::Failed(e.to_string()),
            RouteError::HopLimitExceeded => Self::HopLimitExceeded,
            RouteError::ShuttingDown => Self::ShuttingDown,
            RouteError::Store(e) => Self::Store(e.to_string()),
        }
    }
}

type ReplySender = oneshot::Sender<Result<Bytes, InvokeError>>;

/// Callers waiting for a reply, keyed by ticket.
#[derive(Default)]
pub struct Replies {
    next: AtomicU64,
    pending: parking_lot::Mutex<HashMap<u64, ReplySender>>,
}

impl Replies {
    pub fn register(&self) -> (ReplyTicket, oneshot::Receiver<Result<Bytes, InvokeError>>) {
        let t = self.next.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = oneshot::channel();
        self.pending.lock().insert(t, tx);
        (ReplyTicket(t), rx)
    }

    pub fn cancel(&self, t: ReplyTicket) {
        self.pending.lock().remove(&t.0);
    }

    pub fn resolve(&self, t: ReplyTicket, result: Result<Bytes, InvokeError>) {
        if let Some(tx) = self.pending.lock().remove(&t.0) {
            let _ = tx.send(result);
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.lock().len()
    }
}

/// Middleware, buffer and dispatcher of one node.
pub struct Node {
    config: NodeConfig,
    middleware: Middleware,
    buffer: Buffer,
    dispatcher: Dispatcher,
    replies: Arc<Replies>,
    trace: Arc<Trace>,
    tasks: parking_lot::Mutex<Vec<JoinHandle<()>>>,
}

pub(crate) struct Shared {
    pub store: SharedStore,
    pub directory: Arc<Directory>,
    pub handlers: Arc<HandlerRegistry>,
    pub replies: Arc<Replies>,
    pub trace: Arc<Trace>,
    pub external: Option<SharedStore>,
}

impl Node {
    pub(crate) async fn start(config: NodeConfig, shared: &Shared) -> Result<Arc<Self>, ClusterError> {
        config.validate()?;
        let lifecycle = config.lifecycle()?;
        let runtime = ActorRuntime::new(shared.external.clone()).map_err(ClusterError::Runtime)?;
        let max_hops = config.buffer.max_hops;
        let node = Arc::new(Self {
            middleware: Middleware::new(
                config.address.clone(),
                shared.store.clone(),
                shared.directory.clone(),
                max_hops,
            ),
            buffer: Buffer::new(config.buffer),
            dispatcher: Dispatcher::new(runtime, shared.handlers.clone(), lifecycle, max_hops),
            replies: shared.replies.clone(),
            trace: shared.trace.clone(),
            tasks: parking_lot::Mutex::new(Vec::new()),
            config,
        });
        shared.directory.insert(&node);
        node.middleware.register().await?;

        let weak = Arc::downgrade(&node);
        let sweep = node.config.buffer.sweep_interval();
        let sweeper = tokio::spawn(async move {
            let mut pause = sweep;
            loop {
                tokio::time::sleep(pause).await;
                let Some(node) = weak.upgrade() else { return };
                let actions = node.buffer.spill_check(MonoTime::now());
                if !actions.is_empty() {
                    node.trace_actions(&actions);
                    if let Err(e) = node.perform(actions, SpawnReason::Spill).await {
                        debug!(error = %e, "spill");
                    }
                }
                // Wake at the earliest spill deadline rather than the next tick.
                pause = node.buffer.next_spill_in(MonoTime::now()).map_or(sweep, |d| d.min(sweep));
            }
        });
        let weak = Arc::downgrade(&node);
        let every = node.config.heartbeat_interval;
        let heartbeat = tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let Some(node) = weak.upgrade() else { return };
                if let Err(e) = node.middleware.register().await {
                    warn!(node = %node.address(), error = %e, "heartbeat");
                }
            }
        });
        node.tasks.lock().extend([sweeper, heartbeat]);
        Ok(node)
    }

    pub fn address(&self) -> &NodeAddr {
        &self.config.address
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn middleware(&self) -> &Middleware {
        &self.middleware
    }

    pub fn buffer(&self) -> &Buffer {
        &self.buffer
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Takes a routed message into this node's buffer and acts on the
    /// buffer's decision.
    pub async fn accept(self: &Arc<Self>, msg: Message, info: Option<ActorRef>) -> Result<(), RouteError> {
        let message_id = msg.message_id;
        let accepted = self.buffer.accept(msg, info.as_ref(), MonoTime::now())?;
        self.trace.record(TraceEvent::Outcome {
            message_id,
            node: self.address().clone(),
            outcome: accepted.outcome,
        });
        self.perform(accepted.actions, SpawnReason::Fresh).await
    }

    /// Records the outcome implied by follow-up actions (promotions, spills,
    /// rejections) in the trace.
    pub(crate) fn trace_actions(&self, actions: &[BufferAction]) {
        if !self.trace.is_enabled() {
            return;
        }
        for a in actions {
            let (msg, outcome) = match a {
                BufferAction::Deliver { msg, .. } => (msg, BufferOutcome::Forwarded),
                BufferAction::Spawn { msg, .. } => (msg, BufferOutcome::SpawnedNew),
                BufferAction::Forward { msg } | BufferAction::Fail { msg, .. } => (msg, BufferOutcome::RejectedForwarded),
            };
            self.trace.record(TraceEvent::Outcome {
                message_id: msg.message_id,
                node: self.address().clone(),
                outcome,
            });
        }
    }

    /// Carries out buffer actions. Only a failed spawn for a message the
    /// buffer did not keep is reported back; everything else is resolved here.
    pub fn perform(self: &Arc<Self>, actions: Vec<BufferAction>, reason: SpawnReason) -> BoxFuture<'_, Result<(), RouteError>> {
        Box::pin(async move {
            let mut first_err = None;
            for action in actions {
                match action {
                    BufferAction::Deliver { actor, msg } => {
                        if let Err(msg) = self.dispatcher.dispatch(actor, msg) {
                            let again = self.buffer.release(actor, Some(msg), MonoTime::now());
                            if let Err(e) = self.perform(again, SpawnReason::Redeliver).await {
                                debug!(error = %e, "re-delivery");
                            }
                        }
                    }
                    BufferAction::Spawn {
                        actor,
                        handler,
                        msg,
                        retain_on_failure,
                    } => {
                        let reason = if retain_on_failure && reason == SpawnReason::Fresh {
                            SpawnReason::Spill
                        } else {
                            reason.clone()
                        };
                        let copy = retain_on_failure.then(|| msg.clone());
                        if let Err(e) = self.dispatcher.spawn(self, actor, &handler, msg, reason).await {
                            debug!(actor = %actor, error = %e, "spawn failed");
                            self.buffer.spawn_failed(actor, copy, MonoTime::now());
                            if !retain_on_failure && first_err.is_none() {
                                first_err = Some(e);
                            }
                        }
                    }
                    BufferAction::Forward { msg } => {
                        let copy = msg.clone();
                        if let Err(e) = self.middleware.ingress(msg).await {
                            self.fail_message(&copy, e.into());
                        }
                    }
                    BufferAction::Fail { msg, reason } => {
                        let err = match reason {
                            FailReason::HopLimitExceeded => InvokeError::HopLimitExceeded,
                        };
                        self.fail_message(&msg, err);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        })
    }

    /// Reports a message that will not be processed to its sender.
    pub fn fail_message(&self, msg: &Message, err: InvokeError) {
        self.buffer.record_failed(msg.message_id, MonoTime::now());
        self.trace.record(TraceEvent::Failed {
            message_id: msg.message_id,
            reason: err.to_string(),
        });
        match msg.reply_to {
            Some(ReplyTo::Caller(t)) => self.replies.resolve(t, Err(err)),
            Some(ReplyTo::Actor(id)) => debug!(to = %id, error = %err, "failure not reported to actor"),
            None => debug!(message = %msg.message_id, error = %err, "message failed"),
        }
    }

    pub(crate) async fn reply(&self, to: ReplyTo, output: Bytes, parent: MessageId) {
        match to {
            ReplyTo::Caller(t) => self.replies.resolve(t, Ok(output)),
            ReplyTo::Actor(id) => {
                let m = reply_message(id, output);
                self.trace.record(TraceEvent::Submitted {
                    parent,
                    message_id: m.message_id,
                });
                if let Err(e) = self.middleware.ingress(m).await {
                    debug!(to = %id, error = %e, "reply dropped");
                }
            }
        }
    }

    pub async fn status(&self) -> NodeStatus {
        let now = MonoTime::now();
        let mut actors: Vec<ActorStatus> = match self.middleware.store().scan(ACTOR_PREFIX).await {
            Ok(recs) => recs
                .into_iter()
                .filter_map(|r| ActorRef::decode(&r.value, r.version).ok())
                .filter(|a| a.node == self.config.address)
                .map(|a| ActorStatus {
                    actor_id: a.actor_id,
                    handler: a.handler_name,
                    phase: a.phase,
                    blocked: a.blocked,
                    directive: a.last_directive,
                    idle_ms: now.saturating_sub(a.last_activity).as_millis() as u64,
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        actors.sort_by_key(|a| a.actor_id);
        NodeStatus {
            address: self.config.address.clone(),
            max_actors: self.config.max_actors(),
            buffer: self.buffer.status(now),
            actors,
        }
    }

    fn abort_tasks(&self) {
        for t in self.tasks.lock().drain(..) {
            t.abort();
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ActorStatus {
    pub actor_id: ActorId,
    pub handler: String,
    pub phase: LifecyclePhase,
    pub blocked: bool,
    pub directive: Directive,
    pub idle_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeStatus {
    pub address: NodeAddr,
    pub max_actors: usize,
    pub buffer: BufferStatus,
    pub actors: Vec<ActorStatus>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterStatus {
    pub accepting: bool,
    pub handlers: Vec<String>,
    pub middleware: Vec<RegistryEntry>,
    pub nodes: Vec<NodeStatus>,
    pub store: StoreStats,
    pub external_store: Option<StoreStats>,
    pub pending_replies: usize,
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Config(#[from] crate::ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("runtime: {0}")]
    Runtime(RuntimeError),
    #[error("external state store: {0}")]
    External(std::io::Error),
}

/// Where handlers deployed with external state keep it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ExternalState {
    Disabled,
    /// A loopback store server, reached through the network client with an
    /// injected one-way delay.
    Loopback { one_way_delay: Duration },
    Remote { addr: String, one_way_delay: Duration },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClusterConfig {
    pub nodes: usize,
    pub node: NodeConfig,
    pub external_state: ExternalState,
    pub invoke_timeout: Duration,
    pub drain_timeout: Duration,
    pub trace: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            nodes: 1,
            node: NodeConfig::new("node-0"),
            external_state: ExternalState::Loopback {
                one_way_delay: Duration::from_millis(5),
            },
            invoke_timeout: Duration::from_secs(60),
            drain_timeout: Duration::from_secs(30),
            trace: false,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), crate::ConfigError> {
        if self.nodes < 1 {
            return Err(crate::ConfigError::new("nodes must be >= 1"));
        }
        if self.invoke_timeout.is_zero() {
            return Err(crate::ConfigError::new("invoke_timeout must be > 0"));
        }
        self.node.validate()
    }

    fn node_config(&self, i: usize) -> NodeConfig {
        let mut c = self.node.clone();
        if self.nodes > 1 {
            c.address = NodeAddr::new(format!("{}/{i}", self.node.address));
        }
        c
    }
}

/// The result of a successful invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub message_id: MessageId,
    pub decision: RoutingDecision,
    /// The reply, when the caller waited for one.
    pub output: Option<Bytes>,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShutdownReport {
    pub drained: bool,
    pub remaining_messages: usize,
    pub remaining_actors: usize,
}

/// One or more nodes sharing a store.
pub struct Cluster {
    config: ClusterConfig,
    shared: Shared,
    nodes: Vec<Arc<Node>>,
    accepting: AtomicBool,
    entry: AtomicUsize,
    _external_server: Option<StoreServer>,
}

impl Cluster {
    pub async fn start(config: ClusterConfig, store: SharedStore) -> Result<Self, ClusterError> {
        config.validate()?;
        let (external, server) = match &config.external_state {
            ExternalState::Disabled => (None, None),
            ExternalState::Loopback { one_way_delay } => {
                let server = StoreServer::bind("127.0.0.1:0", Arc::new(MemoryStore::new()))
                    .await
                    .map_err(ClusterError::External)?;
                let client = RemoteStore::connect(&server.local_addr().to_string())
                    .await?
                    .with_injected_delay(*one_way_delay);
                (Some(Arc::new(client) as SharedStore), Some(server))
            }
            ExternalState::Remote { addr, one_way_delay } => {
                let client = RemoteStore::connect(addr).await?.with_injected_delay(*one_way_delay);
                (Some(Arc::new(client) as SharedStore), None)
            }
        };
        let shared = Shared {
            store,
            directory: Arc::new(Directory::default()),
            handlers: Arc::new(HandlerRegistry::default()),
            replies: Arc::new(Replies::default()),
            trace: Arc::new(Trace::new(config.trace)),
            external,
        };
        let mut nodes = Vec::with_capacity(config.nodes);
        for i in 0..config.nodes {
            nodes.push(Node::start(config.node_config(i), &shared).await?);
        }
        // Every node registered; refresh the order once more.
        nodes[0].middleware().register().await?;
        Ok(Self {
            config,
            shared,
            nodes,
            accepting: AtomicBool::new(true),
            entry: AtomicUsize::new(0),
            _external_server: server,
        })
    }

    /// A single node on a fresh in-memory store.
    pub async fn in_memory(config: ClusterConfig) -> Result<Self, ClusterError> {
        Self::start(config, Arc::new(MemoryStore::new())).await
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Arc<Node>] {
        &self.nodes
    }

    pub fn store(&self) -> &SharedStore {
        &self.shared.store
    }

    pub fn external_store(&self) -> Option<&SharedStore> {
        self.shared.external.as_ref()
    }

    pub fn trace(&self) -> &Trace {
        &self.shared.trace
    }

    pub fn handlers(&self) -> Vec<String> {
        self.shared.handlers.names()
    }

    pub fn is_accepting(&self) -> bool {
        self.accepting.load(Ordering::SeqCst)
    }

    /// Validates the module on every node and makes the handler routable.
    pub fn deploy(&self, spec: HandlerSpec) -> Result<(), RuntimeError> {
        if spec.name.is_empty() {
            return Err(RuntimeError::ModuleInvalid("handler name must not be empty".into()));
        }
        if spec.state_mode == crate::runtime::StateMode::External && self.shared.external.is_none() {
            return Err(RuntimeError::ResourceExhausted("external state is disabled".into()));
        }
        for n in &self.nodes {
            n.dispatcher().runtime().prepare(&spec)?;
        }
        self.shared.handlers.insert(spec);
        Ok(())
    }

    /// Sends a payload to a target; with `wait`, returns the reply.
    pub async fn invoke(&self, target: Target, payload: impl Into<Bytes>, wait: bool) -> Result<Invocation, InvokeError> {
        self.submit(Message::new(target, payload), wait).await
    }

    /// Like [`Cluster::invoke`] for a prepared message.
    pub async fn submit(&self, mut msg: Message, wait: bool) -> Result<Invocation, InvokeError> {
        if !self.is_accepting() {
            return Err(InvokeError::ShuttingDown);
        }
        let started = MonoTime::now();
        msg.t_ingress.get_or_insert(started);
        let message_id = msg.message_id;
        let reply = if wait {
            let (t, rx) = self.shared.replies.register();
            msg.reply_to = Some(ReplyTo::Caller(t));
            Some((t, rx))
        } else {
            None
        };
        let i = self.entry.fetch_add(1, Ordering::Relaxed) % self.nodes.len();
        let decision = match self.nodes[i].middleware().ingress(msg).await {
            Ok(d) => d,
            Err(e) => {
                if let Some((t, _)) = reply {
                    self.shared.replies.cancel(t);
                }
                return Err(e.into());
            }
        };
        let output = match reply {
            None => None,
            Some((t, rx)) => match tokio::time::timeout(self.config.invoke_timeout, rx).await {
                Ok(Ok(Ok(out))) => Some(out),
                Ok(Ok(Err(e))) => return Err(e),
                Ok(Err(_)) => return Err(InvokeError::Failed("reply dropped".into())),
                Err(_) => {
                    self.shared.replies.cancel(t);
                    return Err(InvokeError::Timeout);
                }
            },
        };
        Ok(Invocation {
            message_id,
            decision,
            output,
            latency: MonoTime::now().saturating_sub(started),
        })
    }

    pub async fn status(&self) -> ClusterStatus {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            nodes.push(n.status().await);
        }
        let external_store = match &self.shared.external {
            Some(s) => Some(s.stats()),
            None => None,
        };
        ClusterStatus {
            accepting: self.is_accepting(),
            handlers: self.handlers(),
            middleware: self.shared.store.list_middleware().await.unwrap_or_default(),
            nodes,
            store: self.shared.store.stats(),
            external_store,
            pending_replies: self.shared.replies.pending(),
        }
    }

    /// True when no message is waiting or in flight anywhere.
    pub fn is_idle(&self) -> bool {
        self.nodes.iter().all(|n| n.buffer().is_drained())
    }

    /// Waits until no message is waiting or in flight, up to `timeout`.
    pub async fn quiesce(&self, timeout: Duration) -> bool {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            if self.is_idle() {
                return true;
            }
            if tokio::time::Instant::now() >= deadline {
                return false;
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
    }

    /// Stops accepting invocations, lets queued work finish (bounded by the
    /// drain timeout), then terminates all actors.
    pub async fn shutdown(&self) -> ShutdownReport {
        self.accepting.store(false, Ordering::SeqCst);
        let drained = self.quiesce(self.config.drain_timeout).await;
        for n in &self.nodes {
            n.dispatcher().stop_all();
        }
        let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
        while self.nodes.iter().any(|n| n.dispatcher().actor_count() > 0) && tokio::time::Instant::now() < deadline {
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        for n in &self.nodes {
            n.abort_tasks();
            self.shared.directory.remove(n.address());
        }
        ShutdownReport {
            drained,
            remaining_messages: self.nodes.iter().map(|n| n.buffer().waiting_ids().len()).sum(),
            remaining_actors: self.nodes.iter().map(|n| n.dispatcher().actor_count()).sum(),
        }
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        for n in &self.nodes {
            n.dispatcher().stop_all();
            n.abort_tasks();
        }
    }
}
