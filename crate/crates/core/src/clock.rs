// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Monotonic timestamps shared by every component of one process.

use std::sync::OnceLock;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

fn epoch() -> Instant {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    *EPOCH.get_or_init(Instant::now)
}

/// Microseconds on the process monotonic clock. Only comparable within one process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MonoTime(pub u64);

impl MonoTime {
    pub fn now() -> Self {
        Self::from_instant(Instant::now())
    }

    pub fn from_instant(at: Instant) -> Self {
        Self(at.saturating_duration_since(epoch()).as_micros() as u64)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, earlier: MonoTime) -> Duration {
        Duration::from_micros(self.0.saturating_sub(earlier.0))
    }

    pub fn add(self, d: Duration) -> Self {
        Self(self.0 + d.as_micros() as u64)
    }
}

/// Wall-clock milliseconds since the unix epoch, for audit logs and the registry.
pub fn wall_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
