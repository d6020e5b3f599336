// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Actor cells on one node.
//!
//! Each actor runs as one task that owns its lifecycle and its reference
//! record. The task takes messages from the actor channel one at a time, so
//! an actor never runs two invocations at once; it terminates on failure
//! (after releasing its messages) or when idle past the suspend timeout.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use tokio::sync::{mpsc, watch};
use tracing::{debug, warn};

use crate::buffer::BufferConfig;
use crate::clock::MonoTime;
use crate::ids::{ActorId, NodeAddr};
use crate::lifecycle::{on_idle_timeout, IdleVerdict, Lifecycle, LifecycleConfig, LifecycleEvent, LifecyclePhase};
use crate::message::Message;
use crate::middleware::{BlockError, RouteError};
use crate::node::{HandlerRegistry, Node};
use crate::records::ActorRef;
use crate::runtime::{read_state, ActorRuntime, ActorState, Channel, InvocationResult, PreparedHandler, RuntimeError};
use crate::store::{DEFAULT_HEARTBEAT_INTERVAL, StoreError};
use crate::trace::{SpawnReason, TraceEvent};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeConfig {
    pub address: NodeAddr,
    pub lifecycle_suspend_timeout: Duration,
    pub buffer: BufferConfig,
    pub heartbeat_interval: Duration,
}

impl NodeConfig {
    pub fn new(address: impl Into<String>) -> Self {
        Self {
            address: NodeAddr::new(address),
            lifecycle_suspend_timeout: LifecycleConfig::default().suspend_timeout,
            buffer: BufferConfig::default(),
            heartbeat_interval: DEFAULT_HEARTBEAT_INTERVAL,
        }
    }

    pub fn max_actors(&self) -> usize {
        self.buffer.max_actors
    }

    pub fn lifecycle(&self) -> Result<LifecycleConfig, crate::ConfigError> {
        LifecycleConfig::new(self.lifecycle_suspend_timeout)
    }

    pub fn validate(&self) -> Result<(), crate::ConfigError> {
        if self.address.as_str().is_empty() {
            return Err(crate::ConfigError::new("node address must not be empty"));
        }
        if self.heartbeat_interval.is_zero() {
            return Err(crate::ConfigError::new("heartbeat_interval must be > 0"));
        }
        self.lifecycle()?;
        self.buffer.validate()
    }
}

struct CellHandle {
    channel: Channel,
    handler: String,
}

pub struct Dispatcher {
    runtime: ActorRuntime,
    handlers: Arc<HandlerRegistry>,
    lifecycle: LifecycleConfig,
    max_hops: u8,
    cells: parking_lot::Mutex<HashMap<ActorId, CellHandle>>,
    stop: watch::Sender<bool>,
}

impl Dispatcher {
    pub fn new(
        runtime: ActorRuntime,
        handlers: Arc<HandlerRegistry>,
        lifecycle: LifecycleConfig,
        max_hops: u8,
    ) -> Self {
        Self {
            runtime,
            handlers,
            lifecycle,
            max_hops,
            cells: parking_lot::Mutex::new(HashMap::new()),
            stop: watch::channel(false).0,
        }
    }

    pub fn runtime(&self) -> &ActorRuntime {
        &self.runtime
    }

    pub fn actor_count(&self) -> usize {
        self.cells.lock().len()
    }

    pub fn actors(&self) -> Vec<(ActorId, String)> {
        self.cells
            .lock()
            .iter()
            .map(|(id, c)| (*id, c.handler.clone()))
            .collect()
    }

    /// Current short-term state of a live actor.
    pub fn actor_state(&self, actor: &ActorId) -> Option<ActorState> {
        let channel = self.cells.lock().get(actor)?.channel.clone();
        read_state(&channel).ok()
    }

    /// Hands a message to a running cell. Gives the message back when the
    /// actor is gone.
    pub fn dispatch(&self, actor: ActorId, mut msg: Message) -> Result<(), Message> {
        msg.t_dispatch = Some(MonoTime::now());
        let channel = match self.cells.lock().get(&actor) {
            Some(c) => c.channel.clone(),
            None => return Err(msg),
        };
        channel.send(msg)
    }

    /// Creates an actor with a reserved id, registers it, and delivers its
    /// first message.
    pub async fn spawn(
        &self,
        node: &Arc<Node>,
        actor: ActorId,
        handler: &str,
        msg: Message,
        reason: SpawnReason,
    ) -> Result<(), RouteError> {
        let spec = self
            .handlers
            .get(handler)
            .ok_or_else(|| RouteError::SpawnFailed(format!("handler {handler:?} is not deployed")))?;
        let cell = self
            .runtime
            .spawn_cell_with_id(actor, &spec)
            .map_err(|f| RouteError::SpawnFailed(f.error.to_string()))?;
        let mut lifecycle = cell.lifecycle;
        let mut record = ActorRef::new(actor, handler, node.address().clone());
        node.middleware().register_actor(&mut record).await?;
        lifecycle
            .fire(LifecycleEvent::Initialized)
            .expect("fresh cell is CREATED");
        record.phase = LifecyclePhase::Suspended;
        record.last_activity = MonoTime::now();
        node.middleware().update_actor(&mut record).await?;

        let message_id = msg.message_id;
        self.cells.lock().insert(
            actor,
            CellHandle {
                channel: cell.channel.clone(),
                handler: handler.to_owned(),
            },
        );
        let task = CellTask {
            node: node.clone(),
            actor,
            channel: cell.channel,
            handler: cell.handler,
            lifecycle,
            record,
        };
        tokio::spawn(task.run(cell.inbox, self.stop.subscribe()));
        node.trace().record(TraceEvent::Spawned {
            actor_id: actor,
            handler: handler.to_owned(),
            node: node.address().clone(),
            reason,
            message_id,
        });
        if let Err(msg) = self.dispatch(actor, msg) {
            return Err(RouteError::NoRoute(format!(
                "actor {actor} vanished before its first message {}",
                msg.message_id
            )));
        }
        Ok(())
    }

    /// Asks every cell to terminate once idle.
    pub fn stop_all(&self) {
        self.stop.send_replace(true);
    }

    fn forget(&self, actor: &ActorId) -> Option<CellHandle> {
        self.cells.lock().remove(actor)
    }
}

struct CellTask {
    node: Arc<Node>,
    actor: ActorId,
    channel: Channel,
    handler: Arc<PreparedHandler>,
    lifecycle: Lifecycle,
    record: ActorRef,
}

enum Next {
    Continue,
    Exit,
}

impl CellTask {
    async fn run(mut self, mut inbox: mpsc::Receiver<Message>, mut stop: watch::Receiver<bool>) {
        let suspend = self.node.dispatcher().lifecycle.suspend_timeout;
        let mut idle_at = tokio::time::Instant::now() + suspend;
        let mut stopping = *stop.borrow();
        loop {
            if stopping {
                if self.terminate(LifecycleEvent::IdleTimeout, &mut inbox).await {
                    return;
                }
            }
            tokio::select! {
                biased;
                m = inbox.recv() => match m {
                    Some(msg) => {
                        if let Next::Exit = self.process(msg).await {
                            return;
                        }
                        idle_at = tokio::time::Instant::now() + suspend;
                    }
                    None => return,
                },
                _ = tokio::time::sleep_until(idle_at) => {
                    match on_idle_timeout(&self.record, &self.node.dispatcher().lifecycle, MonoTime::now()) {
                        Ok(IdleVerdict::Terminate) => {
                            if self.terminate(LifecycleEvent::IdleTimeout, &mut inbox).await {
                                return;
                            }
                            idle_at = tokio::time::Instant::now() + suspend;
                        }
                        Ok(IdleVerdict::Rearm(d)) => idle_at = tokio::time::Instant::now() + d,
                        Err(e) => {
                            debug!(actor = %self.actor, error = %e, "idle timer lost the race");
                            idle_at = tokio::time::Instant::now() + suspend;
                        }
                    }
                }
                changed = stop.changed(), if !stopping => {
                    stopping = changed.is_err() || *stop.borrow();
                }
            }
        }
    }

    async fn persist(&mut self) {
        let mw = self.node.middleware();
        for _ in 0..3 {
            match mw.update_actor(&mut self.record).await {
                Ok(()) => return,
                Err(StoreError::CasConflict { current }) => self.record.version = current,
                Err(e) => {
                    warn!(actor = %self.actor, error = %e, "actor reference not written");
                    return;
                }
            }
        }
    }

    fn fire(&mut self, event: LifecycleEvent) {
        if let Err(e) = self.lifecycle.fire(event) {
            warn!(actor = %self.actor, error = %e, "lifecycle");
        }
    }

    async fn process(&mut self, msg: Message) -> Next {
        let node = self.node.clone();
        self.fire(LifecycleEvent::MessageArrived);
        match node.middleware().block(&self.actor).await {
            Ok(_) | Err(BlockError::AlreadyBlocked(_)) => {}
            Err(e) => warn!(actor = %self.actor, error = %e, "block"),
        }
        self.record.phase = LifecyclePhase::Running;
        self.record.blocked = true;
        self.record.last_activity = MonoTime::now();
        self.persist().await;

        node.trace().record(TraceEvent::InvokeStart {
            actor_id: self.actor,
            message_id: msg.message_id,
        });
        let result = node.dispatcher().runtime.invoke(&self.handler, &self.channel, &msg).await;
        node.trace().record(TraceEvent::InvokeEnd {
            actor_id: self.actor,
            message_id: msg.message_id,
            ok: result.is_ok(),
        });
        match result {
            Ok(r) => {
                self.complete(msg, r).await;
                Next::Continue
            }
            Err(e) => {
                self.fail(msg, e).await;
                Next::Exit
            }
        }
    }

    async fn complete(&mut self, msg: Message, result: InvocationResult) {
        let node = self.node.clone();
        self.fire(LifecycleEvent::ProcessingDone);

        // An empty reply with outbound work hands the reply obligation to the
        // first outbound message.
        let transfer = result.output.is_empty() && !result.outbound.is_empty() && msg.reply_to.is_some();
        let mut inherited = if transfer { msg.reply_to } else { None };
        for ob in result.outbound {
            let mut next = Message::new(ob.target, ob.payload);
            next.reply_to = inherited.take();
            next.t_ingress = Some(MonoTime::now());
            node.trace().record(TraceEvent::Submitted {
                parent: msg.message_id,
                message_id: next.message_id,
            });
            let copy = next.clone();
            if let Err(e) = node.middleware().ingress(next).await {
                node.fail_message(&copy, e.into());
            }
        }
        let unclaimed = match (transfer, msg.reply_to) {
            (true, _) => None,
            (false, Some(to)) => {
                node.reply(to, result.output.clone(), msg.message_id).await;
                None
            }
            (false, None) => Some(result.output.clone()),
        };

        self.fire(LifecycleEvent::ReturnToIdle);
        self.record.phase = LifecyclePhase::Suspended;
        self.record.blocked = false;
        self.record.last_directive = result.directive;
        self.record.last_activity = MonoTime::now();
        self.persist().await;
        match node.middleware().unblock(&self.actor).await {
            Ok(_) | Err(BlockError::AlreadyUnblocked(_)) => {}
            Err(e) => warn!(actor = %self.actor, error = %e, "unblock"),
        }
        node.trace().record(TraceEvent::Completed {
            actor_id: self.actor,
            message_id: msg.message_id,
            directive: result.directive,
        });
        match node
            .buffer()
            .on_completion(self.actor, msg.message_id, result.directive, unclaimed, MonoTime::now())
        {
            Ok(actions) => {
                node.trace_actions(&actions);
                if let Err(e) = node.perform(actions, SpawnReason::Redeliver).await {
                    warn!(actor = %self.actor, error = %e, "follow-up delivery");
                }
            }
            Err(e) => warn!(actor = %self.actor, error = %e, "completion"),
        }
    }

    async fn fail(&mut self, mut msg: Message, cause: RuntimeError) {
        let node = self.node.clone();
        debug!(actor = %self.actor, error = %cause, "invocation failed");
        self.fire(LifecycleEvent::Failure);
        self.record.phase = LifecyclePhase::Error;
        self.persist().await;

        node.trace().record(TraceEvent::Released {
            actor_id: self.actor,
            message_id: Some(msg.message_id),
        });
        // Each release counts as a hop so a message that always fails ends.
        msg.hop_count = msg.hop_count.saturating_add(1);
        let retry = if msg.hop_count >= node.dispatcher().max_hops {
            node.fail_message(&msg, crate::node::InvokeError::Failed(cause.to_string()));
            None
        } else {
            Some(msg)
        };
        let actions = node.buffer().release(self.actor, retry, MonoTime::now());

        self.fire(LifecycleEvent::SelfDestroy);
        self.channel.destroy();
        node.dispatcher().forget(&self.actor);
        if let Err(e) = node.middleware().deregister(&self.actor).await {
            debug!(actor = %self.actor, error = %e, "deregister");
        }
        node.trace().record(TraceEvent::Terminated {
            actor_id: self.actor,
            via: LifecycleEvent::SelfDestroy,
        });
        if let Err(e) = node.perform(actions, SpawnReason::Redeliver).await {
            warn!(actor = %self.actor, error = %e, "re-delivery after failure");
        }
    }

    /// Idle termination. Returns false when a message won the race, in which
    /// case the actor stays SUSPENDED.
    async fn terminate(&mut self, via: LifecycleEvent, inbox: &mut mpsc::Receiver<Message>) -> bool {
        let node = self.node.clone();
        if self.lifecycle.phase() != LifecyclePhase::Suspended {
            return false;
        }
        let before = self.record.clone();
        self.record.phase = LifecyclePhase::Termination;
        if let Err(e) = node.middleware().update_actor(&mut self.record).await {
            debug!(actor = %self.actor, error = %e, "termination lost the race");
            self.record = before;
            return false;
        }
        if !node.buffer().try_retire(self.actor) {
            self.record.phase = LifecyclePhase::Suspended;
            self.persist().await;
            return false;
        }
        self.fire(via);
        self.channel.destroy();
        node.dispatcher().forget(&self.actor);
        if let Err(e) = node.middleware().deregister(&self.actor).await {
            debug!(actor = %self.actor, error = %e, "deregister");
        }
        node.trace().record(TraceEvent::Terminated {
            actor_id: self.actor,
            via,
        });
        // Retired under the buffer lock, so nothing can be queued here; this
        // only guards against a delivery that raced the retirement.
        inbox.close();
        while let Ok(mut m) = inbox.try_recv() {
            let copy = m.clone();
            m.target = crate::message::Target::Handler(self.record.handler_name.clone());
            if let Err(e) = node.middleware().ingress(m).await {
                node.fail_message(&copy, e.into());
            }
        }
        true
    }
}

/// Reply routing for an actor-addressed reply.
pub(crate) fn reply_message(to: ActorId, payload: bytes::Bytes) -> Message {
    let mut m = Message::new(crate::message::Target::Actor(to), payload);
    m.t_ingress = Some(MonoTime::now());
    m
}

