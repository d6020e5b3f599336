// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Optional in-memory event log, used by tests and diagnostics to check
//! ordering properties after a run. Disabled traces cost one atomic load.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::Serialize;

use crate::buffer::BufferOutcome;
use crate::clock::MonoTime;
use crate::ids::{ActorId, MessageId, NodeAddr};
use crate::lifecycle::LifecycleEvent;
use crate::message::Directive;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SpawnReason {
    Fresh,
    Spill,
    Redeliver,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum TraceEvent {
    Outcome {
        message_id: MessageId,
        node: NodeAddr,
        outcome: BufferOutcome,
    },
    Spawned {
        actor_id: ActorId,
        handler: String,
        node: NodeAddr,
        reason: SpawnReason,
        message_id: MessageId,
    },
    InvokeStart {
        actor_id: ActorId,
        message_id: MessageId,
    },
    InvokeEnd {
        actor_id: ActorId,
        message_id: MessageId,
        ok: bool,
    },
    Submitted {
        parent: MessageId,
        message_id: MessageId,
    },
    Completed {
        actor_id: ActorId,
        message_id: MessageId,
        directive: Directive,
    },
    Released {
        actor_id: ActorId,
        message_id: Option<MessageId>,
    },
    Failed {
        message_id: MessageId,
        reason: String,
    },
    Terminated {
        actor_id: ActorId,
        via: LifecycleEvent,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Stamped {
    pub at: MonoTime,
    pub event: TraceEvent,
}

#[derive(Default)]
pub struct Trace {
    enabled: AtomicBool,
    events: parking_lot::Mutex<Vec<Stamped>>,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled: AtomicBool::new(enabled),
            events: parking_lot::Mutex::new(Vec::new()),
        }
    }

    pub fn set_enabled(&self, on: bool) {
        self.enabled.store(on, Ordering::Relaxed);
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled.load(Ordering::Relaxed)
    }

    pub fn record(&self, event: TraceEvent) {
        if self.is_enabled() {
            let at = MonoTime::now();
            self.events.lock().push(Stamped { at, event });
        }
    }

    pub fn snapshot(&self) -> Vec<Stamped> {
        self.events.lock().clone()
    }

    pub fn clear(&self) {
        self.events.lock().clear();
    }

    /// Buffer outcomes recorded for one message, in order.
    pub fn outcomes_of(&self, id: MessageId) -> Vec<BufferOutcome> {
        self.events
            .lock()
            .iter()
            .filter_map(|s| match &s.event {
                TraceEvent::Outcome { message_id, outcome, .. } if *message_id == id => Some(*outcome),
                _ => None,
            })
            .collect()
    }
}
