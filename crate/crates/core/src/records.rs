// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Records kept in the state store, with their binary encodings.

use serde::Serialize;

use crate::clock::MonoTime;
use crate::ids::{ActorId, NodeAddr};
use crate::lifecycle::LifecyclePhase;
use crate::message::Directive;
use crate::wire::{Reader, WireError, Writer};

pub fn actor_key(id: &ActorId) -> String {
    format!("actor/{id}")
}

pub fn block_key(id: &ActorId) -> String {
    format!("block/{id}")
}

pub fn middleware_key(node: &NodeAddr) -> String {
    format!("mw/{node}")
}

pub fn state_key(handler: &str) -> String {
    format!("state/{handler}")
}

pub const ACTOR_PREFIX: &str = "actor/";
pub const MIDDLEWARE_PREFIX: &str = "mw/";
pub const STATE_PREFIX: &str = "state/";

/// Registry record describing one live actor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ActorRef {
    pub actor_id: ActorId,
    pub handler_name: String,
    pub phase: LifecyclePhase,
    pub node: NodeAddr,
    pub channel_id: String,
    pub blocked: bool,
    pub last_directive: Directive,
    pub last_activity: MonoTime,
    /// Store version this snapshot was read at (not encoded).
    pub version: u64,
}

impl ActorRef {
    pub fn new(actor_id: ActorId, handler_name: impl Into<String>, node: NodeAddr) -> Self {
        Self {
            actor_id,
            handler_name: handler_name.into(),
            phase: LifecyclePhase::Created,
            node,
            channel_id: actor_id.channel_id(),
            blocked: false,
            last_directive: Directive::AcceptNext,
            last_activity: MonoTime::now(),
            version: 0,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(self.actor_id.as_bytes());
        w.str16(&self.handler_name);
        w.u8(self.phase.code());
        w.str16(self.node.as_str());
        w.str16(&self.channel_id);
        w.u8(self.blocked as u8);
        w.u8(self.last_directive.code());
        w.u64(self.last_activity.as_micros());
        w.finish()
    }

    pub fn decode(buf: &[u8], version: u64) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let actor_id = ActorId::from_bytes(r.array16()?);
        let handler_name = r.str16()?;
        let phase = LifecyclePhase::from_code(r.u8()?).ok_or(WireError::BadValue("phase"))?;
        let node = NodeAddr::new(r.str16()?);
        let channel_id = r.str16()?;
        let blocked = r.bool()?;
        let last_directive =
            Directive::from_code(r.u8()?).ok_or(WireError::BadValue("directive"))?;
        let last_activity = MonoTime(r.u64()?);
        r.expect_end()?;
        Ok(Self {
            actor_id,
            handler_name,
            phase,
            node,
            channel_id,
            blocked,
            last_directive,
            last_activity,
            version,
        })
    }

    /// Eligible for a direct hand-off: idle and not blocked.
    pub fn is_available(&self) -> bool {
        self.phase == LifecyclePhase::Suspended && !self.blocked
    }
}

/// Whether an actor currently has a message in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRecord {
    pub actor_id: ActorId,
    pub blocked: bool,
    pub version: u64,
}

impl BlockRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(self.actor_id.as_bytes());
        w.u8(self.blocked as u8);
        w.finish()
    }

    pub fn decode(buf: &[u8], version: u64) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let actor_id = ActorId::from_bytes(r.array16()?);
        let blocked = r.bool()?;
        r.expect_end()?;
        Ok(Self {
            actor_id,
            blocked,
            version,
        })
    }
}

/// A middleware node known to the registry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegistryEntry {
    pub address: NodeAddr,
    pub registered_at_ms: u64,
    pub heartbeat_ms: u64,
    /// Registration order, assigned by the store on first registration.
    pub seq: u64,
}

impl RegistryEntry {
    pub fn new(address: NodeAddr, now_ms: u64) -> Self {
        Self {
            address,
            registered_at_ms: now_ms,
            heartbeat_ms: now_ms,
            seq: 0,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.str16(self.address.as_str());
        w.u64(self.registered_at_ms);
        w.u64(self.heartbeat_ms);
        w.u64(self.seq);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            address: NodeAddr::new(r.str16()?),
            registered_at_ms: r.u64()?,
            heartbeat_ms: r.u64()?,
            seq: r.u64()?,
        })
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let e = Self::read(&mut r)?;
        r.expect_end()?;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn actor_ref_round_trips(
            id in any::<[u8; 16]>(),
            name in "[a-z0-9-]{0,24}",
            phase in 0u8..6,
            blocked in any::<bool>(),
            dir in 0u8..3,
            activity in any::<u64>(),
            version in any::<u64>(),
        ) {
            let mut r = ActorRef::new(ActorId::from_bytes(id), name, NodeAddr::new("node-1"));
            r.phase = LifecyclePhase::from_code(phase).unwrap();
            r.blocked = blocked;
            r.last_directive = Directive::from_code(dir).unwrap();
            r.last_activity = MonoTime(activity);
            r.version = version;
            prop_assert_eq!(ActorRef::decode(&r.encode(), version).unwrap(), r);
        }
    }

    #[test]
    fn truncated_records_are_rejected() {
        let r = ActorRef::new(ActorId::new(), "echo", NodeAddr::new("n"));
        let enc = r.encode();
        assert!(ActorRef::decode(&enc[..enc.len() - 1], 0).is_err());
        let b = BlockRecord { actor_id: ActorId::new(), blocked: true, version: 3 };
        assert_eq!(BlockRecord::decode(&b.encode(), 3).unwrap(), b);
        let mut e = RegistryEntry::new(NodeAddr::new("n"), 10);
        e.seq = 4;
        assert_eq!(RegistryEntry::decode(&e.encode()).unwrap(), e);
    }
}
