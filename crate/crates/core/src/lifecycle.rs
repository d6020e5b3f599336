// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! The actor lifecycle: six phases and the event-labelled transition relation
//! every actor instance follows from creation to termination.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{wall_millis, MonoTime};
use crate::records::ActorRef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LifecyclePhase {
    Created,
    Suspended,
    Running,
    Completed,
    Error,
    Termination,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LifecycleEvent {
    Initialized,
    MessageArrived,
    ProcessingDone,
    ReturnToIdle,
    Failure,
    IdleTimeout,
    SelfDestroy,
}

impl LifecyclePhase {
    pub const ALL: [LifecyclePhase; 6] = [
        Self::Created,
        Self::Suspended,
        Self::Running,
        Self::Completed,
        Self::Error,
        Self::Termination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Created => "CREATED",
            Self::Suspended => "SUSPENDED",
            Self::Running => "RUNNING",
            Self::Completed => "COMPLETED",
            Self::Error => "ERROR",
            Self::Termination => "TERMINATION",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 7] = [
        Self::Initialized,
        Self::MessageArrived,
        Self::ProcessingDone,
        Self::ReturnToIdle,
        Self::Failure,
        Self::IdleTimeout,
        Self::SelfDestroy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Initialized => "INITIALIZED",
            Self::MessageArrived => "MESSAGE_ARRIVED",
            Self::ProcessingDone => "PROCESSING_DONE",
            Self::ReturnToIdle => "RETURN_TO_IDLE",
            Self::Failure => "FAILURE",
            Self::IdleTimeout => "IDLE_TIMEOUT",
            Self::SelfDestroy => "SELF_DESTROY",
        }
    }
}

impl fmt::Display for LifecyclePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for LifecycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown lifecycle name {0:?}")]
pub struct UnknownName(pub String);

impl FromStr for LifecyclePhase {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownName(s.to_owned()))
    }
}

impl FromStr for LifecycleEvent {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| UnknownName(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum LifecycleError {
    #[error("illegal transition: {event} in phase {phase}")]
    IllegalTransition {
        phase: LifecyclePhase,
        event: LifecycleEvent,
    },
}

use LifecycleEvent as E;
use LifecyclePhase as P;

const TRANSITIONS: [(LifecyclePhase, LifecycleEvent, LifecyclePhase); 8] = [
    (P::Created, E::Initialized, P::Suspended),
    (P::Created, E::Failure, P::Error),
    (P::Suspended, E::MessageArrived, P::Running),
    (P::Suspended, E::IdleTimeout, P::Termination),
    (P::Running, E::ProcessingDone, P::Completed),
    (P::Running, E::Failure, P::Error),
    (P::Completed, E::ReturnToIdle, P::Suspended),
    (P::Error, E::SelfDestroy, P::Termination),
];

/// The complete transition relation. Anything not listed is illegal.
pub fn legal_transitions() -> &'static [(LifecyclePhase, LifecycleEvent, LifecyclePhase)] {
    &TRANSITIONS
}

/// Successor of `phase` under `event`, or `IllegalTransition`.
pub fn apply(phase: LifecyclePhase, event: LifecycleEvent) -> Result<LifecyclePhase, LifecycleError> {
    TRANSITIONS
        .iter()
        .find(|(from, ev, _)| *from == phase && *ev == event)
        .map(|(_, _, to)| *to)
        .ok_or(LifecycleError::IllegalTransition { phase, event })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LifecycleConfig {
    pub suspend_timeout: Duration,
}

impl LifecycleConfig {
    pub fn new(suspend_timeout: Duration) -> Result<Self, crate::ConfigError> {
        if suspend_timeout.is_zero() {
            return Err(crate::ConfigError::new("suspend_timeout must be > 0"));
        }
        Ok(Self { suspend_timeout })
    }
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        Self {
            suspend_timeout: Duration::from_secs(30),
        }
    }
}

/// Outcome of an idle-timer check on a suspended actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdleVerdict {
    /// The actor has been idle long enough; commit `IDLE_TIMEOUT`.
    Terminate,
    /// Not idle long enough yet; re-arm the timer for the remaining time.
    Rearm(Duration),
}

/// Decides whether a suspended actor has outlived its suspend timeout.
///
/// The caller commits the `TERMINATION` transition only if the actor record
/// is unchanged since it was read (compare-and-set on the record version),
/// so a message that wins the race keeps the actor alive.
pub fn on_idle_timeout(
    actor: &ActorRef,
    config: &LifecycleConfig,
    now: MonoTime,
) -> Result<IdleVerdict, LifecycleError> {
    if actor.phase != P::Suspended {
        return Err(LifecycleError::IllegalTransition {
            phase: actor.phase,
            event: E::IdleTimeout,
        });
    }
    let idle = now.saturating_sub(actor.last_activity);
    if idle >= config.suspend_timeout {
        Ok(IdleVerdict::Terminate)
    } else {
        Ok(IdleVerdict::Rearm(config.suspend_timeout - idle))
    }
}

/// One committed transition, kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub from: LifecyclePhase,
    pub event: LifecycleEvent,
    pub to: LifecyclePhase,
    pub at: MonoTime,
    pub wall_ms: u64,
}

/// The state machine of a single actor instance.
///
/// Exactly one phase is active at a time; every change goes through [`apply`]
/// and is appended to the audit history.
#[derive(Debug, Clone)]
pub struct Lifecycle {
    phase: LifecyclePhase,
    history: Vec<Transition>,
}

impl Lifecycle {
    pub fn new() -> Self {
        Self {
            phase: P::Created,
            history: Vec::new(),
        }
    }

    pub fn phase(&self) -> LifecyclePhase {
        self.phase
    }

    pub fn history(&self) -> &[Transition] {
        &self.history
    }

    pub fn fire(&mut self, event: LifecycleEvent) -> Result<LifecyclePhase, LifecycleError> {
        let to = apply(self.phase, event)?;
        self.history.push(Transition {
            from: self.phase,
            event,
            to,
            at: MonoTime::now(),
            wall_ms: wall_millis(),
        });
        self.phase = to;
        Ok(to)
    }

    /// Number of times the machine entered `phase`.
    pub fn visits(&self, phase: LifecyclePhase) -> usize {
        self.history.iter().filter(|t| t.to == phase).count()
    }
}

impl Default for Lifecycle {
    fn default() -> Self {
        Self::new()
    }
}
