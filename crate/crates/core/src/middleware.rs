// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Message routing, actor references and the block/unblock protocol.
//!
//! The middleware resolves a target to a routing decision from the actor
//! references in the store, then hands the message to the chosen node's
//! buffer. Actor-level serialization is owned by the buffer; block records
//! mirror it in the store for other nodes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use bytes::Bytes;
use futures::future::BoxFuture;
use serde::Serialize;
use thiserror::Error;

use crate::buffer::BufferError;
use crate::clock::wall_millis;
use crate::ids::{ActorId, NodeAddr};
use crate::lifecycle::LifecyclePhase;
use crate::message::{Directive, Message, Target};
use crate::node::Directory;
use crate::records::{actor_key, block_key, ActorRef, BlockRecord, RegistryEntry, ACTOR_PREFIX};
use crate::store::{SharedStore, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RoutingDecision {
    /// A suspended, unblocked actor exists.
    ToExisting { actor: ActorRef },
    /// The actor is busy but its last directive accepts more messages.
    ToWilling { actor: ActorRef },
    /// A buffer that can create a new actor. Carries the addressed actor when
    /// it is known but unwilling.
    ToFreeBuffer { node: NodeAddr, actor: Option<ActorRef> },
    NoRoute,
}

impl RoutingDecision {
    pub fn node(&self) -> Option<&NodeAddr> {
        match self {
            Self::ToExisting { actor } | Self::ToWilling { actor } => Some(&actor.node),
            Self::ToFreeBuffer { node, .. } => Some(node),
            Self::NoRoute => None,
        }
    }

    pub fn actor(&self) -> Option<&ActorRef> {
        match self {
            Self::ToExisting { actor } | Self::ToWilling { actor } => Some(actor),
            Self::ToFreeBuffer { actor, .. } => actor.as_ref(),
            Self::NoRoute => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::ToExisting { .. } => "TO_EXISTING",
            Self::ToWilling { .. } => "TO_WILLING",
            Self::ToFreeBuffer { .. } => "TO_FREE_BUFFER",
            Self::NoRoute => "NO_ROUTE",
        }
    }
}

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("no route: {0}")]
    NoRoute(String),
    #[error("hop limit exceeded")]
    HopLimitExceeded,
    #[error("shutting down")]
    ShuttingDown,
    #[error("spawn failed: {0}")]
    SpawnFailed(String),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("actor {0} is already blocked")]
    AlreadyBlocked(ActorId),
    #[error("actor {0} is already unblocked")]
    AlreadyUnblocked(ActorId),
    #[error("unknown actor {0}")]
    UnknownActor(ActorId),
    #[error(transparent)]
    Store(StoreError),
}

/// Spare capacity of one node, in registry order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCapacity {
    pub address: NodeAddr,
    /// Message slots available for a new actor; 0 when the node cannot spawn.
    pub free_slots: usize,
}

/// The routing rule, free of I/O.
///
/// `actors` are the candidate references (for an actor target, the one
/// record), ordered by preference. `rr` breaks ties between equally free
/// buffers.
pub fn decide(target: &Target, actors: &[ActorRef], nodes: &[NodeCapacity], rr: usize) -> RoutingDecision {
    let live = |a: &&ActorRef| {
        matches!(
            a.phase,
            LifecyclePhase::Created | LifecyclePhase::Suspended | LifecyclePhase::Running | LifecyclePhase::Completed
        )
    };
    match target {
        Target::Actor(_) => {
            let Some(a) = actors.iter().find(live) else {
                return RoutingDecision::NoRoute;
            };
            if a.is_available() {
                RoutingDecision::ToExisting { actor: a.clone() }
            } else if a.last_directive.is_willing() {
                RoutingDecision::ToWilling { actor: a.clone() }
            } else {
                // The owning buffer forwards it on by handler name.
                RoutingDecision::ToFreeBuffer {
                    node: a.node.clone(),
                    actor: Some(a.clone()),
                }
            }
        }
        Target::Handler(name) => {
            let mine = || actors.iter().filter(live).filter(|a| a.handler_name == *name);
            if let Some(a) = mine().find(|a| a.is_available() && a.last_directive != Directive::Reject) {
                return RoutingDecision::ToExisting { actor: a.clone() };
            }
            if let Some(a) = mine().find(|a| a.last_directive == Directive::Hold) {
                return RoutingDecision::ToWilling { actor: a.clone() };
            }
            if let Some(node) = first_free(nodes, rr) {
                return RoutingDecision::ToFreeBuffer { node, actor: None };
            }
            if let Some(a) = mine().find(|a| a.last_directive == Directive::AcceptNext) {
                return RoutingDecision::ToWilling { actor: a.clone() };
            }
            RoutingDecision::NoRoute
        }
    }
}

fn first_free(nodes: &[NodeCapacity], rr: usize) -> Option<NodeAddr> {
    let best = nodes.iter().map(|n| n.free_slots).max().filter(|m| *m > 0)?;
    let tied: Vec<&NodeCapacity> = nodes.iter().filter(|n| n.free_slots == best).collect();
    Some(tied[rr % tied.len()].address.clone())
}

pub struct Middleware {
    address: NodeAddr,
    store: SharedStore,
    directory: Arc<Directory>,
    max_hops: u8,
    rr: AtomicUsize,
}

impl Middleware {
    pub fn new(address: NodeAddr, store: SharedStore, directory: Arc<Directory>, max_hops: u8) -> Self {
        Self {
            address,
            store,
            directory,
            max_hops,
            rr: AtomicUsize::new(0),
        }
    }

    pub fn address(&self) -> &NodeAddr {
        &self.address
    }

    pub fn store(&self) -> &SharedStore {
        &self.store
    }

    /// Registers (or heartbeats) this node and refreshes the node order.
    pub async fn register(&self) -> Result<RegistryEntry, StoreError> {
        let entry = self
            .store
            .register_middleware(RegistryEntry::new(self.address.clone(), wall_millis()))
            .await?;
        let live = self.store.list_middleware().await?;
        self.directory.set_order(live.into_iter().map(|e| e.address).collect());
        Ok(entry)
    }

    /// Routes a message and hands it to the chosen buffer.
    pub fn ingress(&self, msg: Message) -> BoxFuture<'_, Result<RoutingDecision, RouteError>> {
        Box::pin(async move {
            if msg.hop_count >= self.max_hops {
                return Err(RouteError::HopLimitExceeded);
            }
            let decision = self.route(&msg).await?;
            let Some(addr) = decision.node() else {
                return Err(RouteError::NoRoute(format!("no actor or free buffer for {:?}", msg.target)));
            };
            let node = self
                .directory
                .get(addr)
                .ok_or_else(|| RouteError::NoRoute(format!("node {addr} is not reachable")))?;
            node.accept(msg, decision.actor().cloned()).await?;
            Ok(decision)
        })
    }

    /// Resolves the routing decision without delivering.
    pub async fn route(&self, msg: &Message) -> Result<RoutingDecision, RouteError> {
        let nodes = self.directory.capacities();
        let rr = self.rr.fetch_add(1, Ordering::Relaxed);
        let actors = match &msg.target {
            Target::Actor(id) => match self.lookup(id).await? {
                Some(a) => vec![a],
                None => return Ok(RoutingDecision::NoRoute),
            },
            Target::Handler(name) => {
                let order = self.directory.order();
                let mut refs: Vec<ActorRef> = self
                    .store
                    .scan(ACTOR_PREFIX)
                    .await?
                    .into_iter()
                    .filter_map(|r| ActorRef::decode(&r.value, r.version).ok())
                    .filter(|a| a.handler_name == *name)
                    .collect();
                refs.sort_by_key(|a| {
                    (
                        order.iter().position(|n| *n == a.node).unwrap_or(usize::MAX),
                        a.actor_id,
                    )
                });
                refs
            }
        };
        Ok(decide(&msg.target, &actors, &nodes, rr))
    }

    /// The actor reference, with `blocked` taken from either record.
    pub async fn lookup(&self, id: &ActorId) -> Result<Option<ActorRef>, StoreError> {
        let mut actor = match self.store.get(&actor_key(id)).await {
            Ok(r) => ActorRef::decode(&r.value, r.version)?,
            Err(StoreError::NotFound) => return Ok(None),
            Err(e) => return Err(e),
        };
        match self.store.get(&block_key(id)).await {
            Ok(r) => actor.blocked |= BlockRecord::decode(&r.value, r.version)?.blocked,
            Err(StoreError::NotFound) => return Ok(None),
            Err(e) => return Err(e),
        }
        Ok(Some(actor))
    }

    /// Stores a new actor reference and its (unblocked) block record.
    pub async fn register_actor(&self, actor: &mut ActorRef) -> Result<(), StoreError> {
        let block = BlockRecord {
            actor_id: actor.actor_id,
            blocked: false,
            version: 0,
        };
        self.store
            .put_cas(&block_key(&actor.actor_id), Bytes::from(block.encode()), 0)
            .await?;
        actor.version = self
            .store
            .put_cas(&actor_key(&actor.actor_id), Bytes::from(actor.encode()), 0)
            .await?;
        Ok(())
    }

    /// Writes an actor reference over the version it was read at.
    pub async fn update_actor(&self, actor: &mut ActorRef) -> Result<(), StoreError> {
        actor.version = self
            .store
            .put_cas(&actor_key(&actor.actor_id), Bytes::from(actor.encode()), actor.version)
            .await?;
        Ok(())
    }

    pub async fn block(&self, id: &ActorId) -> Result<BlockRecord, BlockError> {
        self.set_blocked(id, true).await
    }

    pub async fn unblock(&self, id: &ActorId) -> Result<BlockRecord, BlockError> {
        self.set_blocked(id, false).await
    }

    async fn set_blocked(&self, id: &ActorId, blocked: bool) -> Result<BlockRecord, BlockError> {
        let key = block_key(id);
        loop {
            let current = match self.store.get(&key).await {
                Ok(r) => BlockRecord::decode(&r.value, r.version).map_err(|e| BlockError::Store(e.into()))?,
                Err(StoreError::NotFound) => return Err(BlockError::UnknownActor(*id)),
                Err(e) => return Err(BlockError::Store(e)),
            };
            if current.blocked == blocked {
                return Err(if blocked {
                    BlockError::AlreadyBlocked(*id)
                } else {
                    BlockError::AlreadyUnblocked(*id)
                });
            }
            let next = BlockRecord {
                actor_id: *id,
                blocked,
                version: current.version,
            };
            match self.store.put_cas(&key, Bytes::from(next.encode()), current.version).await {
                Ok(version) => return Ok(BlockRecord { version, ..next }),
                Err(StoreError::CasConflict { .. }) => continue,
                Err(e) => return Err(BlockError::Store(e)),
            }
        }
    }

    /// Removes the actor reference and block record.
    pub async fn deregister(&self, id: &ActorId) -> Result<(), BlockError> {
        let mut found = false;
        for key in [actor_key(id), block_key(id)] {
            match self.store.get(&key).await {
                Ok(_) => found = true,
                Err(StoreError::NotFound) => continue,
                Err(e) => return Err(BlockError::Store(e)),
            }
            self.store.delete(&key).await.map_err(BlockError::Store)?;
        }
        if found {
            Ok(())
        } else {
            Err(BlockError::UnknownActor(*id))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::MemoryStore;
    use proptest::prelude::*;

    fn actor(handler: &str, node: &str, phase: LifecyclePhase, blocked: bool, d: Directive) -> ActorRef {
        let mut a = ActorRef::new(ActorId::new(), handler, NodeAddr::new(node));
        a.phase = phase;
        a.blocked = blocked;
        a.last_directive = d;
        a
    }

    fn caps(free: &[usize]) -> Vec<NodeCapacity> {
        free.iter()
            .enumerate()
            .map(|(i, f)| NodeCapacity {
                address: NodeAddr::new(format!("n{i}")),
                free_slots: *f,
            })
            .collect()
    }

    #[test]
    fn suspended_actor_is_existing() {
        let a = actor("h", "n0", LifecyclePhase::Suspended, false, Directive::AcceptNext);
        let d = decide(&Target::Actor(a.actor_id), &[a.clone()], &caps(&[1]), 0);
        assert_eq!(d, RoutingDecision::ToExisting { actor: a });
    }

    #[test]
    fn running_hold_actor_is_willing() {
        let a = actor("h", "n0", LifecyclePhase::Running, true, Directive::Hold);
        let d = decide(&Target::Actor(a.actor_id), &[a.clone()], &caps(&[1]), 0);
        assert_eq!(d.kind(), "TO_WILLING");
        // By name, HOLD attracts the message ahead of a free buffer.
        let d = decide(&Target::handler("h"), &[a.clone()], &caps(&[5]), 0);
        assert_eq!(d, RoutingDecision::ToWilling { actor: a });
    }

    #[test]
    fn unknown_name_goes_to_free_buffer() {
        let d = decide(&Target::handler("nobody"), &[], &caps(&[3]), 0);
        assert_eq!(d, RoutingDecision::ToFreeBuffer { node: NodeAddr::new("n0"), actor: None });
        assert_eq!(decide(&Target::handler("x"), &[], &caps(&[0, 0]), 0), RoutingDecision::NoRoute);
    }

    #[test]
    fn busy_accept_next_is_a_fallback() {
        let a = actor("h", "n0", LifecyclePhase::Running, true, Directive::AcceptNext);
        assert_eq!(decide(&Target::handler("h"), &[a.clone()], &caps(&[2]), 0).kind(), "TO_FREE_BUFFER");
        assert_eq!(
            decide(&Target::handler("h"), &[a.clone()], &caps(&[0]), 0),
            RoutingDecision::ToWilling { actor: a }
        );
    }

    #[test]
    fn rejecting_actor_is_never_willing() {
        let a = actor("h", "n0", LifecyclePhase::Running, true, Directive::Reject);
        let d = decide(&Target::Actor(a.actor_id), &[a.clone()], &caps(&[0]), 0);
        assert_eq!(d, RoutingDecision::ToFreeBuffer { node: a.node.clone(), actor: Some(a.clone()) });
        assert_eq!(decide(&Target::handler("h"), &[a], &caps(&[0]), 0), RoutingDecision::NoRoute);
    }

    #[test]
    fn terminated_actor_has_no_route() {
        let a = actor("h", "n0", LifecyclePhase::Termination, false, Directive::AcceptNext);
        assert_eq!(decide(&Target::Actor(a.actor_id), &[a], &caps(&[4]), 0), RoutingDecision::NoRoute);
    }

    #[test]
    fn free_buffer_tie_break() {
        let c = caps(&[2, 5, 5, 1]);
        let pick = |rr| decide(&Target::handler("h"), &[], &c, rr);
        assert_eq!(pick(0).node(), Some(&NodeAddr::new("n1")));
        assert_eq!(pick(1).node(), Some(&NodeAddr::new("n2")));
        assert_eq!(pick(2).node(), Some(&NodeAddr::new("n1")));
    }

    fn any_actor() -> impl Strategy<Value = ActorRef> {
        (0usize..6, any::<bool>(), 0u8..3, 0usize..2).prop_map(|(p, blocked, d, h)| {
            actor(
                ["a", "b"][h],
                "n0",
                LifecyclePhase::ALL[p],
                blocked,
                Directive::from_code(d).unwrap(),
            )
        })
    }

    proptest! {
        #[test]
        fn routing_is_deterministic_and_respects_blocks(
            actors in proptest::collection::vec(any_actor(), 0..8),
            free in proptest::collection::vec(0usize..4, 1..4),
            rr in 0usize..16,
            by_name in any::<bool>(),
        ) {
            let target = match (by_name, actors.first()) {
                (false, Some(a)) => Target::Actor(a.actor_id),
                _ => Target::handler("a"),
            };
            let candidates: Vec<ActorRef> = match &target {
                Target::Actor(_) => actors.iter().take(1).cloned().collect(),
                Target::Handler(_) => actors.clone(),
            };
            let c = caps(&free);
            let d = decide(&target, &candidates, &c, rr);
            prop_assert_eq!(&d, &decide(&target, &candidates, &c, rr));
            match &d {
                RoutingDecision::ToExisting { actor } => {
                    prop_assert_eq!(actor.phase, LifecyclePhase::Suspended);
                    prop_assert!(!actor.blocked);
                }
                RoutingDecision::ToWilling { actor } => prop_assert!(actor.last_directive.is_willing()),
                _ => {}
            }
        }
    }

    fn middleware() -> Middleware {
        Middleware::new(NodeAddr::new("n0"), Arc::new(MemoryStore::new()), Arc::new(Directory::default()), 8)
    }

    #[tokio::test]
    async fn block_then_unblock() {
        let mw = middleware();
        let mut a = ActorRef::new(ActorId::new(), "h", NodeAddr::new("n0"));
        a.phase = LifecyclePhase::Suspended;
        mw.register_actor(&mut a).await.unwrap();
        assert!(mw.lookup(&a.actor_id).await.unwrap().unwrap().is_available());
        mw.block(&a.actor_id).await.unwrap();
        assert!(!mw.lookup(&a.actor_id).await.unwrap().unwrap().is_available());
        assert!(matches!(mw.block(&a.actor_id).await, Err(BlockError::AlreadyBlocked(_))));
        mw.unblock(&a.actor_id).await.unwrap();
        assert!(mw.lookup(&a.actor_id).await.unwrap().unwrap().is_available());
        assert!(matches!(mw.unblock(&a.actor_id).await, Err(BlockError::AlreadyUnblocked(_))));
    }

    #[tokio::test(flavor = "multi_thread", worker_threads = 2)]
    async fn concurrent_blocks_have_one_winner() {
        let mw = Arc::new(middleware());
        for _ in 0..1000 {
            let mut a = ActorRef::new(ActorId::new(), "h", NodeAddr::new("n0"));
            mw.register_actor(&mut a).await.unwrap();
            let id = a.actor_id;
            let (m1, m2) = (mw.clone(), mw.clone());
            let (r1, r2) = tokio::join!(
                tokio::spawn(async move { m1.block(&id).await }),
                tokio::spawn(async move { m2.block(&id).await }),
            );
            let results = [r1.unwrap(), r2.unwrap()];
            assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
            assert_eq!(
                results.iter().filter(|r| matches!(r, Err(BlockError::AlreadyBlocked(_)))).count(),
                1
            );
        }
    }

    #[tokio::test]
    async fn deregister_is_idempotent() {
        let mw = middleware();
        let mut a = ActorRef::new(ActorId::new(), "h", NodeAddr::new("n0"));
        mw.register_actor(&mut a).await.unwrap();
        mw.deregister(&a.actor_id).await.unwrap();
        assert!(mw.lookup(&a.actor_id).await.unwrap().is_none());
        assert!(matches!(mw.deregister(&a.actor_id).await, Err(BlockError::UnknownActor(_))));
        let route = mw.route(&Message::new(Target::Actor(a.actor_id), "x")).await.unwrap();
        assert_eq!(route, RoutingDecision::NoRoute);
    }

    #[tokio::test]
    async fn hop_limit_is_checked_at_ingress() {
        let mw = middleware();
        let mut m = Message::new(Target::handler("h"), "x");
        m.hop_count = 8;
        assert!(matches!(mw.ingress(m).await, Err(RouteError::HopLimitExceeded)));
    }
}
