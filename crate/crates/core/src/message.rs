// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::clock::MonoTime;
use crate::ids::{ActorId, MessageId};

/// An actor's instruction about the next message headed its way.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Directive {
    #[default]
    AcceptNext,
    Hold,
    Reject,
}

impl Directive {
    pub fn code(self) -> u8 {
        match self {
            Self::AcceptNext => 0,
            Self::Hold => 1,
            Self::Reject => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::AcceptNext),
            1 => Some(Self::Hold),
            2 => Some(Self::Reject),
            _ => None,
        }
    }

    /// Whether the actor is willing to have messages queued behind it.
    pub fn is_willing(self) -> bool {
        matches!(self, Self::AcceptNext | Self::Hold)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AcceptNext => "ACCEPT_NEXT",
            Self::Hold => "HOLD",
            Self::Reject => "REJECT",
        }
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Destination of a message: a live actor, or a handler name (spawn or reuse).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Actor(ActorId),
    Handler(String),
}

impl Target {
    pub fn handler(name: impl Into<String>) -> Self {
        Self::Handler(name.into())
    }

    pub fn kind_code(&self) -> u8 {
        match self {
            Self::Actor(_) => 0,
            Self::Handler(_) => 1,
        }
    }

    /// Parses the CLI form: a canonical actor id, otherwise a handler name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<ActorId>() {
            Ok(id) => Self::Actor(id),
            Err(_) => Self::Handler(s.to_owned()),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Actor(id) => write!(f, "{id}"),
            Self::Handler(name) => f.write_str(name),
        }
    }
}

/// Correlates a reply with an external caller waiting on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReplyTicket(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplyTo {
    Actor(ActorId),
    Caller(ReplyTicket),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub message_id: MessageId,
    pub target: Target,
    pub payload: Bytes,
    pub reply_to: Option<ReplyTo>,
    pub t_ingress: Option<MonoTime>,
    pub t_dispatch: Option<MonoTime>,
    pub hop_count: u8,
}

impl Message {
    pub fn new(target: Target, payload: impl Into<Bytes>) -> Self {
        Self {
            message_id: MessageId::new(),
            target,
            payload: payload.into(),
            reply_to: None,
            t_ingress: None,
            t_dispatch: None,
            hop_count: 0,
        }
    }

    pub fn with_reply_to(mut self, reply_to: ReplyTo) -> Self {
        self.reply_to = Some(reply_to);
        self
    }
}
