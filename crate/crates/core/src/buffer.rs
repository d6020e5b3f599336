// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Per-node queue manager.
//!
//! Messages for busy actors wait in per-actor FIFO sub-queues; messages handed
//! to an actor are in flight (the ready queue) until the actor completes; the
//! done ring keeps completion records for observability. Every decision is
//! taken under one lock and returned as [`BufferAction`]s for the node to
//! carry out, so the buffer itself never awaits.

use std::collections::{HashMap, VecDeque};
use std::time::Duration;

use bytes::Bytes;
use serde::Serialize;
use thiserror::Error;

use crate::clock::MonoTime;
use crate::ids::{ActorId, MessageId};
use crate::message::{Directive, Message, Target};
use crate::records::ActorRef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BufferConfig {
    pub max_wait: Duration,
    pub max_queued: usize,
    pub capacity: usize,
    pub max_actors: usize,
    pub max_hops: u8,
    pub done_capacity: usize,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            max_wait: Duration::from_secs(1),
            max_queued: 16,
            capacity: 4096,
            max_actors: 256,
            max_hops: 8,
            done_capacity: 4096,
        }
    }
}

impl BufferConfig {
    pub fn validate(&self) -> Result<(), crate::ConfigError> {
        let err = |m: &str| Err(crate::ConfigError::new(m));
        if self.max_wait.is_zero() {
            return err("max_wait must be > 0");
        }
        if self.max_queued < 1 {
            return err("max_queued must be >= 1");
        }
        if self.capacity < self.max_queued {
            return err("capacity must be >= max_queued");
        }
        if self.max_actors < 1 {
            return err("max_actors must be >= 1");
        }
        if self.max_hops < 1 {
            return err("max_hops must be >= 1");
        }
        Ok(())
    }

    /// How often waiting messages are checked against `max_wait`.
    pub fn sweep_interval(&self) -> Duration {
        (self.max_wait / 10).min(Duration::from_millis(100)).max(Duration::from_millis(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BufferOutcome {
    Forwarded,
    QueuedWaiting,
    RejectedForwarded,
    SpawnedNew,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BufferError {
    #[error("buffer capacity exceeded")]
    CapacityExceeded,
    #[error("no delivery possible: {0}")]
    NoRoute(String),
    #[error("unknown message {0}")]
    UnknownMessage(MessageId),
}

/// Side effects the node must perform after a buffer decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BufferAction {
    /// Hand the message to this local actor's channel.
    Deliver { actor: ActorId, msg: Message },
    /// Create a fresh actor with the reserved id, then deliver.
    Spawn {
        actor: ActorId,
        handler: String,
        msg: Message,
        /// Keep the message waiting if the spawn fails (otherwise the caller
        /// receives the error).
        retain_on_failure: bool,
    },
    /// Re-route through the middleware (after a rejection).
    Forward { msg: Message },
    /// Give up on the message and report the error to its sender.
    Fail { msg: Message, reason: FailReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailReason {
    HopLimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accepted {
    pub outcome: BufferOutcome,
    pub actions: Vec<BufferAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DoneStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DoneRecord {
    pub message_id: MessageId,
    pub actor_id: Option<ActorId>,
    pub status: DoneStatus,
    pub at: MonoTime,
    /// The output of a message nobody waits for.
    #[serde(skip)]
    pub output: Option<Bytes>,
}

#[derive(Debug, Clone)]
struct Waiting {
    msg: Message,
    since: MonoTime,
}

#[derive(Debug)]
struct LocalActor {
    handler: String,
    in_flight: Option<MessageId>,
    directive: Directive,
    waiting: VecDeque<Waiting>,
}

impl LocalActor {
    fn new(handler: String) -> Self {
        Self {
            handler,
            in_flight: None,
            directive: Directive::AcceptNext,
            waiting: VecDeque::new(),
        }
    }

    fn busy(&self) -> bool {
        self.in_flight.is_some()
    }

    fn idle(&self) -> bool {
        !self.busy() && self.waiting.is_empty() && self.directive != Directive::Reject
    }
}

#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct OutcomeCounts {
    pub forwarded: u64,
    pub queued_waiting: u64,
    pub rejected_forwarded: u64,
    pub spawned_new: u64,
    pub spawn_failures: u64,
}

fn handler_of(st: &State, id: ActorId) -> String {
    st.actors.get(&id).map(|a| a.handler.clone()).unwrap_or_default()
}

#[derive(Debug, Default)]
struct State {
    actors: HashMap<ActorId, LocalActor>,
    /// Released messages whose actor is gone; re-delivered by handler name.
    orphans: VecDeque<Waiting>,
    done: VecDeque<DoneRecord>,
    counts: OutcomeCounts,
}

impl State {
    fn waiting_len(&self) -> usize {
        self.actors.values().map(|a| a.waiting.len()).sum::<usize>() + self.orphans.len()
    }

    fn in_flight_len(&self) -> usize {
        self.actors.values().filter(|a| a.busy()).count()
    }

    fn used(&self) -> usize {
        self.waiting_len() + self.in_flight_len()
    }
}

/// Queue depths and counters, for the status endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct BufferStatus {
    pub capacity: usize,
    pub waiting: usize,
    pub ready: usize,
    pub done: usize,
    pub oldest_waiting_ms: Option<u64>,
    pub actors: usize,
    pub outcomes: OutcomeCounts,
}

pub struct Buffer {
    config: BufferConfig,
    state: parking_lot::Mutex<State>,
}

impl Buffer {
    pub fn new(config: BufferConfig) -> Self {
        Self {
            config,
            state: parking_lot::Mutex::new(State::default()),
        }
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    /// Decides what happens to a message routed to this node.
    ///
    /// `info` is the actor record the middleware resolved, if any.
    pub fn accept(
        &self,
        mut msg: Message,
        info: Option<&ActorRef>,
        now: MonoTime,
    ) -> Result<Accepted, BufferError> {
        let mut st = self.state.lock();
        if st.used() >= self.config.capacity {
            return Err(BufferError::CapacityExceeded);
        }
        let by_name = matches!(msg.target, Target::Handler(_));
        let candidate = match &msg.target {
            Target::Actor(id) => Some(*id),
            Target::Handler(_) => info.map(|r| r.actor_id),
        };

        let accepted = match candidate.filter(|id| st.actors.contains_key(id)) {
            Some(id) => {
                let can_spawn = self.can_spawn(&st);
                let sibling = if by_name {
                    self.idle_actor_for(&st, &handler_of(&st, id))
                } else {
                    None
                };
                let a = st.actors.get_mut(&id).expect("checked above");
                if a.directive == Directive::Reject {
                    let handler = a.handler.clone();
                    self.reject(msg, &handler, &mut st)
                } else if a.idle() {
                    a.in_flight = Some(msg.message_id);
                    Accepted {
                        outcome: BufferOutcome::Forwarded,
                        actions: vec![BufferAction::Deliver { actor: id, msg }],
                    }
                } else if let Some(other) = sibling {
                    // The store view was stale; a sibling is idle here.
                    st.actors.get_mut(&other).expect("exists").in_flight = Some(msg.message_id);
                    Accepted {
                        outcome: BufferOutcome::Forwarded,
                        actions: vec![BufferAction::Deliver { actor: other, msg }],
                    }
                } else if by_name && a.directive == Directive::AcceptNext && can_spawn {
                    let handler = a.handler.clone();
                    Accepted {
                        outcome: BufferOutcome::SpawnedNew,
                        actions: vec![self.reserve(&mut st, handler, msg, false)],
                    }
                } else {
                    a.waiting.push_back(Waiting { msg, since: now });
                    if a.waiting.len() > self.config.max_queued && can_spawn {
                        let spilled = a.waiting.pop_back().expect("non-empty").msg;
                        let handler = a.handler.clone();
                        Accepted {
                            outcome: BufferOutcome::SpawnedNew,
                            actions: vec![self.reserve(&mut st, handler, spilled, true)],
                        }
                    } else {
                        Accepted {
                            outcome: BufferOutcome::QueuedWaiting,
                            actions: Vec::new(),
                        }
                    }
                }
            }
            None => {
                let handler = match (&msg.target, info) {
                    (Target::Handler(name), _) => name.clone(),
                    (Target::Actor(_), Some(r)) => r.handler_name.clone(),
                    (Target::Actor(id), None) => {
                        return Err(BufferError::NoRoute(format!("actor {id} is not on this node")))
                    }
                };
                // An addressed actor that vanished is replaced by a fresh one.
                let vanished = !by_name;
                msg.target = Target::Handler(handler.clone());
                if let Some(id) = self.idle_actor_for(&st, &handler) {
                    st.actors.get_mut(&id).expect("exists").in_flight = Some(msg.message_id);
                    Accepted {
                        outcome: BufferOutcome::Forwarded,
                        actions: vec![BufferAction::Deliver { actor: id, msg }],
                    }
                } else if self.can_spawn(&st) {
                    Accepted {
                        outcome: if vanished {
                            BufferOutcome::SpawnedNew
                        } else {
                            BufferOutcome::Forwarded
                        },
                        actions: vec![self.reserve(&mut st, handler, msg, vanished)],
                    }
                } else if let Some(id) = self.willing_actor_for(&st, &handler) {
                    st.actors
                        .get_mut(&id)
                        .expect("exists")
                        .waiting
                        .push_back(Waiting { msg, since: now });
                    Accepted {
                        outcome: BufferOutcome::QueuedWaiting,
                        actions: Vec::new(),
                    }
                } else if vanished {
                    st.orphans.push_back(Waiting { msg, since: now });
                    Accepted {
                        outcome: BufferOutcome::QueuedWaiting,
                        actions: Vec::new(),
                    }
                } else {
                    return Err(BufferError::CapacityExceeded);
                }
            }
        };
        self.count(&mut st, accepted.outcome);
        Ok(accepted)
    }

    /// Records a completion and decides what the actor gets next.
    pub fn on_completion(
        &self,
        actor: ActorId,
        message_id: MessageId,
        directive: Directive,
        output: Option<Bytes>,
        now: MonoTime,
    ) -> Result<Vec<BufferAction>, BufferError> {
        let mut st = self.state.lock();
        let a = st
            .actors
            .get_mut(&actor)
            .filter(|a| a.in_flight == Some(message_id))
            .ok_or(BufferError::UnknownMessage(message_id))?;
        a.in_flight = None;
        a.directive = directive;
        let handler = a.handler.clone();
        let mut actions = Vec::new();
        if directive == Directive::Reject {
            let drained: Vec<_> = a.waiting.drain(..).collect();
            for w in drained {
                let accepted = self.reject(w.msg, &handler, &mut st);
                self.count(&mut st, accepted.outcome);
                actions.extend(accepted.actions);
            }
        } else if let Some(next) = a.waiting.pop_front() {
            a.in_flight = Some(next.msg.message_id);
            st.counts.forwarded += 1;
            actions.push(BufferAction::Deliver { actor, msg: next.msg });
        } else if let Some(pos) = st
            .orphans
            .iter()
            .position(|w| matches!(&w.msg.target, Target::Handler(h) if *h == handler))
        {
            let next = st.orphans.remove(pos).expect("position is valid");
            st.actors.get_mut(&actor).expect("exists").in_flight = Some(next.msg.message_id);
            actions.push(BufferAction::Deliver { actor, msg: next.msg });
        }
        self.push_done(
            &mut st,
            DoneRecord {
                message_id,
                actor_id: Some(actor),
                status: DoneStatus::Completed,
                at: now,
                output,
            },
        );
        Ok(actions)
    }

    /// Periodic sweep: messages that waited longer than `max_wait`, or that
    /// exceed `max_queued` behind one actor, move to a freshly spawned actor;
    /// orphaned messages are re-delivered.
    pub fn spill_check(&self, now: MonoTime) -> Vec<BufferAction> {
        let mut st = self.state.lock();
        let mut spills: Vec<(String, Message)> = Vec::new();
        let mut budget = self.config.max_actors.saturating_sub(st.actors.len());
        let mut ids: Vec<ActorId> = st.actors.keys().copied().collect();
        ids.sort();
        for id in ids {
            let a = st.actors.get_mut(&id).expect("listed");
            while budget > 0 && a.waiting.len() > self.config.max_queued {
                spills.push((a.handler.clone(), a.waiting.pop_back().expect("non-empty").msg));
                budget -= 1;
            }
            while budget > 0
                && a
                    .waiting
                    .front()
                    .is_some_and(|w| now.saturating_sub(w.since) >= self.config.max_wait)
            {
                spills.push((a.handler.clone(), a.waiting.pop_front().expect("non-empty").msg));
                budget -= 1;
            }
        }
        let mut actions: Vec<BufferAction> = spills
            .into_iter()
            .map(|(handler, msg)| {
                st.counts.spawned_new += 1;
                self.reserve(&mut st, handler, msg, true)
            })
            .collect();
        actions.extend(self.drain_orphans(&mut st));
        actions
    }

    /// Releases the in-flight message (if any) and everything waiting for a
    /// failed actor; the actor is forgotten. Returns re-delivery actions.
    pub fn release(&self, actor: ActorId, in_flight: Option<Message>, now: MonoTime) -> Vec<BufferAction> {
        let mut st = self.state.lock();
        let Some(a) = st.actors.remove(&actor) else {
            return Vec::new();
        };
        let handler = a.handler;
        for mut msg in in_flight.into_iter().chain(a.waiting.into_iter().map(|w| w.msg)) {
            msg.target = Target::Handler(handler.clone());
            st.orphans.push_back(Waiting { msg, since: now });
        }
        self.drain_orphans(&mut st)
    }

    /// A spawn for a reserved actor failed: forget it and keep what was
    /// queued for it (and the triggering message, if retained) waiting.
    pub fn spawn_failed(&self, actor: ActorId, retained: Option<Message>, now: MonoTime) {
        let mut st = self.state.lock();
        st.counts.spawn_failures += 1;
        if let Some(a) = st.actors.remove(&actor) {
            let handler = a.handler;
            for mut msg in retained.into_iter().chain(a.waiting.into_iter().map(|w| w.msg)) {
                msg.target = Target::Handler(handler.clone());
                st.orphans.push_back(Waiting { msg, since: now });
            }
        }
    }

    /// Removes an idle actor so it can terminate. Fails if a message won the
    /// race (in flight or waiting).
    pub fn try_retire(&self, actor: ActorId) -> bool {
        let mut st = self.state.lock();
        match st.actors.get(&actor) {
            Some(a) if a.busy() || !a.waiting.is_empty() => false,
            Some(_) => {
                st.actors.remove(&actor);
                true
            }
            None => true,
        }
    }

    /// Records a message that could not be delivered at all.
    pub fn record_failed(&self, message_id: MessageId, now: MonoTime) {
        let mut st = self.state.lock();
        self.push_done(
            &mut st,
            DoneRecord {
                message_id,
                actor_id: None,
                status: DoneStatus::Failed,
                at: now,
                output: None,
            },
        );
    }

    pub fn has_free_slot(&self) -> bool {
        self.state.lock().used() < self.config.capacity
    }

    pub fn can_spawn_now(&self) -> bool {
        self.can_spawn(&self.state.lock())
    }

    /// Free message slots if a new actor could be placed here, else 0.
    pub fn free_for_spawn(&self) -> usize {
        let st = self.state.lock();
        if !self.can_spawn(&st) {
            return 0;
        }
        self.config.capacity.saturating_sub(st.used())
    }

    pub fn is_drained(&self) -> bool {
        self.state.lock().used() == 0
    }

    pub fn done_records(&self) -> Vec<DoneRecord> {
        self.state.lock().done.iter().cloned().collect()
    }

    pub fn waiting_ids(&self) -> Vec<MessageId> {
        let st = self.state.lock();
        st.actors
            .values()
            .flat_map(|a| a.waiting.iter())
            .chain(st.orphans.iter())
            .map(|w| w.msg.message_id)
            .collect()
    }

    pub fn local_actors(&self) -> Vec<ActorId> {
        self.state.lock().actors.keys().copied().collect()
    }

    /// Time until the next waiting message reaches `max_wait`, if any has
    /// not yet.
    pub fn next_spill_in(&self, now: MonoTime) -> Option<Duration> {
        let st = self.state.lock();
        st.actors
            .values()
            .filter_map(|a| a.waiting.front())
            .map(|w| w.since.add(self.config.max_wait).saturating_sub(now))
            .filter(|d| !d.is_zero())
            .min()
    }

    pub fn status(&self, now: MonoTime) -> BufferStatus {
        let st = self.state.lock();
        let oldest = st
            .actors
            .values()
            .flat_map(|a| a.waiting.iter())
            .chain(st.orphans.iter())
            .map(|w| w.since)
            .min();
        BufferStatus {
            capacity: self.config.capacity,
            waiting: st.waiting_len(),
            ready: st.in_flight_len(),
            done: st.done.len(),
            oldest_waiting_ms: oldest.map(|t| now.saturating_sub(t).as_millis() as u64),
            actors: st.actors.len(),
            outcomes: st.counts,
        }
    }

    fn can_spawn(&self, st: &State) -> bool {
        st.actors.len() < self.config.max_actors
    }

    fn idle_actor_for(&self, st: &State, handler: &str) -> Option<ActorId> {
        st.actors
            .iter()
            .filter(|(_, a)| a.handler == handler && a.idle())
            .map(|(id, _)| *id)
            .min()
    }

    fn willing_actor_for(&self, st: &State, handler: &str) -> Option<ActorId> {
        st.actors
            .iter()
            .filter(|(_, a)| {
                a.handler == handler && a.directive.is_willing() && a.waiting.len() < self.config.max_queued
            })
            .min_by_key(|(id, a)| (a.waiting.len(), **id))
            .map(|(id, _)| *id)
    }

    fn reserve(&self, st: &mut State, handler: String, mut msg: Message, retain: bool) -> BufferAction {
        let actor = ActorId::new();
        msg.target = Target::Actor(actor);
        let mut local = LocalActor::new(handler.clone());
        local.in_flight = Some(msg.message_id);
        st.actors.insert(actor, local);
        BufferAction::Spawn {
            actor,
            handler,
            msg,
            retain_on_failure: retain,
        }
    }

    fn reject(&self, mut msg: Message, handler: &str, st: &mut State) -> Accepted {
        msg.hop_count = msg.hop_count.saturating_add(1);
        msg.target = Target::Handler(handler.to_owned());
        if msg.hop_count >= self.config.max_hops {
            let message_id = msg.message_id;
            self.push_done(
                st,
                DoneRecord {
                    message_id,
                    actor_id: None,
                    status: DoneStatus::Failed,
                    at: MonoTime::now(),
                    output: None,
                },
            );
            return Accepted {
                outcome: BufferOutcome::RejectedForwarded,
                actions: vec![BufferAction::Fail {
                    msg,
                    reason: FailReason::HopLimitExceeded,
                }],
            };
        }
        Accepted {
            outcome: BufferOutcome::RejectedForwarded,
            actions: vec![BufferAction::Forward { msg }],
        }
    }

    fn drain_orphans(&self, st: &mut State) -> Vec<BufferAction> {
        let mut actions = Vec::new();
        let mut kept = VecDeque::new();
        while let Some(w) = st.orphans.pop_front() {
            let Target::Handler(handler) = &w.msg.target else {
                kept.push_back(w);
                continue;
            };
            let handler = handler.clone();
            if let Some(id) = self.idle_actor_for(st, &handler) {
                st.actors.get_mut(&id).expect("exists").in_flight = Some(w.msg.message_id);
                actions.push(BufferAction::Deliver { actor: id, msg: w.msg });
            } else if self.can_spawn(st) {
                st.counts.spawned_new += 1;
                actions.push(self.reserve(st, handler, w.msg, true));
            } else {
                kept.push_back(w);
            }
        }
        st.orphans = kept;
        actions
    }

    fn count(&self, st: &mut State, outcome: BufferOutcome) {
        let c = &mut st.counts;
        match outcome {
            BufferOutcome::Forwarded => c.forwarded += 1,
            BufferOutcome::QueuedWaiting => c.queued_waiting += 1,
            BufferOutcome::RejectedForwarded => c.rejected_forwarded += 1,
            BufferOutcome::SpawnedNew => c.spawned_new += 1,
        }
    }

    fn push_done(&self, st: &mut State, rec: DoneRecord) {
        if st.done.len() >= self.config.done_capacity {
            st.done.pop_front();
        }
        st.done.push_back(rec);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::NodeAddr;
    use proptest::prelude::*;

    fn cfg() -> BufferConfig {
        BufferConfig {
            max_wait: Duration::from_millis(200),
            max_queued: 4,
            capacity: 64,
            max_actors: 8,
            max_hops: 3,
            done_capacity: 16,
        }
    }

    fn t(ms: u64) -> MonoTime {
        MonoTime(1_000_000 + ms * 1000)
    }

    /// Spawns one busy actor for "h" and returns its id.
    fn busy_actor(b: &Buffer) -> (ActorId, Message) {
        let acc = b.accept(Message::new(Target::handler("h"), "m0"), None, t(0)).unwrap();
        assert_eq!(acc.outcome, BufferOutcome::Forwarded);
        match acc.actions.as_slice() {
            [BufferAction::Spawn { actor, msg, .. }] => (*actor, msg.clone()),
            other => panic!("expected a spawn, got {other:?}"),
        }
    }

    fn to(actor: ActorId, payload: &'static str) -> Message {
        Message::new(Target::Actor(actor), payload)
    }

    fn info(actor: ActorId) -> ActorRef {
        ActorRef::new(actor, "h", NodeAddr::new("n"))
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(BufferConfig { max_wait: Duration::ZERO, ..cfg() }.validate().is_err());
        assert!(BufferConfig { max_queued: 0, ..cfg() }.validate().is_err());
        assert!(BufferConfig { capacity: 3, ..cfg() }.validate().is_err());
        assert!(BufferConfig { max_actors: 0, ..cfg() }.validate().is_err());
        assert_eq!(cfg().sweep_interval(), Duration::from_millis(20));
        let long = BufferConfig { max_wait: Duration::from_secs(5), ..cfg() };
        assert_eq!(long.sweep_interval(), Duration::from_millis(100));
    }

    #[test]
    fn idle_actor_gets_message_forwarded() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        b.on_completion(a, m0.message_id, Directive::AcceptNext, None, t(1)).unwrap();
        let acc = b.accept(to(a, "m1"), Some(&info(a)), t(2)).unwrap();
        assert_eq!(acc.outcome, BufferOutcome::Forwarded);
        assert!(matches!(&acc.actions[..], [BufferAction::Deliver { actor, .. }] if *actor == a));
    }

    #[test]
    fn busy_hold_actor_queues() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        b.on_completion(a, m0.message_id, Directive::Hold, None, t(1)).unwrap();
        b.accept(to(a, "m1"), Some(&info(a)), t(2)).unwrap();
        let acc = b.accept(to(a, "m2"), Some(&info(a)), t(3)).unwrap();
        assert_eq!(acc.outcome, BufferOutcome::QueuedWaiting);
        assert!(acc.actions.is_empty());
        let acc = b.accept(Message::new(Target::handler("h"), "m3"), Some(&info(a)), t(3)).unwrap();
        assert_eq!(acc.outcome, BufferOutcome::QueuedWaiting);
    }

    #[test]
    fn rejecting_actor_forwards_with_hop() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        b.on_completion(a, m0.message_id, Directive::Reject, None, t(1)).unwrap();
        let acc = b.accept(to(a, "m1"), Some(&info(a)), t(2)).unwrap();
        assert_eq!(acc.outcome, BufferOutcome::RejectedForwarded);
        match &acc.actions[..] {
            [BufferAction::Forward { msg }] => {
                assert_eq!(msg.hop_count, 1);
                assert_eq!(msg.target, Target::handler("h"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reject_at_hop_limit_fails() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        b.on_completion(a, m0.message_id, Directive::Reject, None, t(1)).unwrap();
        let mut m = to(a, "late");
        m.hop_count = 2;
        let acc = b.accept(m, Some(&info(a)), t(2)).unwrap();
        assert!(matches!(
            &acc.actions[..],
            [BufferAction::Fail { reason: FailReason::HopLimitExceeded, .. }]
        ));
        assert_eq!(b.done_records().last().unwrap().status, DoneStatus::Failed);
    }

    #[test]
    fn waiting_past_max_wait_spills() {
        let b = Buffer::new(cfg());
        let (a, _) = busy_actor(&b);
        let m1 = to(a, "m1");
        let id = m1.message_id;
        b.accept(m1, Some(&info(a)), t(10)).unwrap();
        assert!(b.spill_check(t(10 + 199)).is_empty());
        let actions = b.spill_check(t(10 + 201));
        match &actions[..] {
            [BufferAction::Spawn { actor, msg, retain_on_failure, .. }] => {
                assert_ne!(*actor, a);
                assert_eq!(msg.message_id, id);
                assert_eq!(msg.target, Target::Actor(*actor));
                assert!(*retain_on_failure);
            }
            other => panic!("{other:?}"),
        }
        assert!(b.spill_check(t(1000)).is_empty());
    }

    #[test]
    fn queue_beyond_max_queued_spills_immediately() {
        let b = Buffer::new(BufferConfig { max_queued: 2, ..cfg() });
        let (a, _) = busy_actor(&b);
        for p in ["m1", "m2"] {
            let acc = b.accept(to(a, p), Some(&info(a)), t(1)).unwrap();
            assert_eq!(acc.outcome, BufferOutcome::QueuedWaiting);
        }
        let acc = b.accept(to(a, "m3"), Some(&info(a)), t(1)).unwrap();
        assert_eq!(acc.outcome, BufferOutcome::SpawnedNew);
        assert!(matches!(&acc.actions[..], [BufferAction::Spawn { msg, .. }] if msg.payload == "m3"));
    }

    #[test]
    fn empty_buffer_spills_nothing() {
        assert!(Buffer::new(cfg()).spill_check(t(10_000)).is_empty());
    }

    #[test]
    fn completion_promotes_oldest() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        b.accept(to(a, "m1"), Some(&info(a)), t(1)).unwrap();
        b.accept(to(a, "m2"), Some(&info(a)), t(2)).unwrap();
        let actions = b.on_completion(a, m0.message_id, Directive::AcceptNext, None, t(3)).unwrap();
        assert!(matches!(&actions[..], [BufferAction::Deliver { msg, .. }] if msg.payload == "m1"));
        assert_eq!(b.status(t(3)).waiting, 1);
        assert_eq!(b.status(t(3)).ready, 1);
    }

    #[test]
    fn reject_completion_reroutes_waiting() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        b.accept(to(a, "m1"), Some(&info(a)), t(1)).unwrap();
        let actions = b.on_completion(a, m0.message_id, Directive::Reject, None, t(2)).unwrap();
        assert!(matches!(&actions[..], [BufferAction::Forward { msg }] if msg.payload == "m1" && msg.hop_count == 1));
        assert_eq!(b.status(t(2)).outcomes.rejected_forwarded, 1);
    }

    #[test]
    fn completion_without_waiting_only_idles() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        let out = Some(Bytes::from_static(b"done"));
        let actions = b.on_completion(a, m0.message_id, Directive::AcceptNext, out.clone(), t(1)).unwrap();
        assert!(actions.is_empty());
        assert!(b.is_drained());
        assert_eq!(b.done_records()[0].output, out);
        assert!(matches!(
            b.on_completion(a, m0.message_id, Directive::AcceptNext, None, t(1)),
            Err(BufferError::UnknownMessage(_))
        ));
    }

    #[test]
    fn capacity_is_enforced() {
        let b = Buffer::new(BufferConfig { capacity: 4, max_queued: 4, ..cfg() });
        let (a, _) = busy_actor(&b);
        for _ in 0..3 {
            b.accept(to(a, "m"), Some(&info(a)), t(1)).unwrap();
        }
        assert_eq!(
            b.accept(to(a, "m"), Some(&info(a)), t(1)).unwrap_err(),
            BufferError::CapacityExceeded
        );
    }

    #[test]
    fn max_actors_bounds_spawns() {
        let b = Buffer::new(BufferConfig { max_actors: 1, ..cfg() });
        let (a, _) = busy_actor(&b);
        assert!(!b.can_spawn_now());
        // A second name message waits behind the only actor.
        let acc = b.accept(Message::new(Target::handler("h"), "x"), None, t(1)).unwrap();
        assert_eq!(acc.outcome, BufferOutcome::QueuedWaiting);
        assert!(b.spill_check(t(10_000)).is_empty());
        assert!(b.accept(Message::new(Target::handler("other"), "y"), None, t(1)).is_err());
        assert!(!b.try_retire(a));
    }

    #[test]
    fn release_redelivers_to_fresh_actor() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        b.accept(to(a, "m1"), Some(&info(a)), t(1)).unwrap();
        let actions = b.release(a, Some(m0.clone()), t(2));
        assert_eq!(actions.len(), 2);
        let ids: Vec<MessageId> = actions
            .iter()
            .map(|x| match x {
                BufferAction::Spawn { msg, .. } => msg.message_id,
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(ids[0], m0.message_id);
        assert!(b.release(a, None, t(3)).is_empty());
    }

    #[test]
    fn orphans_wait_for_a_slot() {
        let b = Buffer::new(BufferConfig { max_actors: 2, ..cfg() });
        let (a, m0) = busy_actor(&b);
        let (c, m1) = busy_actor(&b);
        let actions = b.release(a, Some(m0.clone()), t(1));
        // Slot freed by the release itself.
        assert_eq!(actions.len(), 1);
        let BufferAction::Spawn { actor: a2, .. } = actions[0].clone() else { panic!() };
        b.spawn_failed(a2, Some(m0.clone()), t(2));
        assert_eq!(b.waiting_ids(), vec![m0.message_id]);
        // The next completion of a same-handler actor picks it up.
        let next = b.on_completion(c, m1.message_id, Directive::AcceptNext, None, t(3)).unwrap();
        assert!(matches!(&next[..], [BufferAction::Deliver { actor, msg }] if *actor == c && msg.message_id == m0.message_id));
    }

    #[test]
    fn retire_only_when_idle() {
        let b = Buffer::new(cfg());
        let (a, m0) = busy_actor(&b);
        assert!(!b.try_retire(a));
        b.on_completion(a, m0.message_id, Directive::AcceptNext, None, t(1)).unwrap();
        assert!(b.try_retire(a));
        assert!(b.local_actors().is_empty());
    }

    #[test]
    fn done_ring_is_bounded() {
        let b = Buffer::new(BufferConfig { done_capacity: 3, ..cfg() });
        for _ in 0..5 {
            b.record_failed(MessageId::new(), t(0));
        }
        assert_eq!(b.done_records().len(), 3);
    }

    proptest! {
        /// Messages queued for one actor are delivered in enqueue order, and
        /// every message ends in exactly one done record.
        #[test]
        fn per_actor_fifo_and_conservation(ops in proptest::collection::vec(any::<bool>(), 1..80)) {
            let b = Buffer::new(BufferConfig { max_queued: 1000, capacity: 2000, ..cfg() });
            let (a, m0) = busy_actor(&b);
            let mut in_flight = Some(m0.message_id);
            let mut sent = vec![m0.message_id];
            let mut delivered = vec![m0.message_id];
            for enqueue in ops {
                if enqueue {
                    let m = to(a, "x");
                    sent.push(m.message_id);
                    for act in b.accept(m, Some(&info(a)), t(1)).unwrap().actions {
                        if let BufferAction::Deliver { msg, .. } = act {
                            prop_assert!(in_flight.is_none());
                            in_flight = Some(msg.message_id);
                            delivered.push(msg.message_id);
                        }
                    }
                } else if let Some(id) = in_flight.take() {
                    for act in b.on_completion(a, id, Directive::AcceptNext, None, t(2)).unwrap() {
                        if let BufferAction::Deliver { msg, .. } = act {
                            in_flight = Some(msg.message_id);
                            delivered.push(msg.message_id);
                        }
                    }
                }
            }
            while let Some(id) = in_flight.take() {
                for act in b.on_completion(a, id, Directive::AcceptNext, None, t(3)).unwrap() {
                    if let BufferAction::Deliver { msg, .. } = act {
                        in_flight = Some(msg.message_id);
                        delivered.push(msg.message_id);
                    }
                }
            }
            prop_assert_eq!(&delivered, &sent);
            let done: Vec<MessageId> = b.done_records().iter().map(|d| d.message_id).collect();
            prop_assert_eq!(done.len(), sent.len().min(16));
            prop_assert!(b.is_drained());
        }
    }
}
