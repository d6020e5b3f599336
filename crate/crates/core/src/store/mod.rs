// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Versioned key-value store for actor references, block records and the
//! middleware registry.

mod memory;
mod remote;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use bytes::Bytes;
use serde::Serialize;
use thiserror::Error;

pub use memory::MemoryStore;
pub use remote::{RemoteStore, StoreServer};

use crate::records::{RegistryEntry, STATE_PREFIX};
use crate::wire::WireError;

pub const DEFAULT_HEARTBEAT_INTERVAL: Duration = Duration::from_secs(2);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VersionedRecord {
    pub key: String,
    pub value: Bytes,
    pub version: u64,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("key not found")]
    NotFound,
    #[error("compare-and-set conflict (current version {current})")]
    CasConflict { current: u64 },
    #[error("store unavailable: {0}")]
    Unavailable(String),
    #[error("malformed record: {0}")]
    Corrupt(#[from] WireError),
}

/// Operation counters, used to verify which paths touch the store.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub gets: u64,
    pub puts: u64,
    pub deletes: u64,
    pub scans: u64,
    pub cas_conflicts: u64,
    /// Reads of short-term actor state (`state/` keys).
    pub state_reads: u64,
    pub state_writes: u64,
}

#[derive(Default)]
pub(crate) struct Counters {
    gets: AtomicU64,
    puts: AtomicU64,
    deletes: AtomicU64,
    scans: AtomicU64,
    cas_conflicts: AtomicU64,
    state_reads: AtomicU64,
    state_writes: AtomicU64,
}

impl Counters {
    pub fn get(&self, key: &str) {
        self.gets.fetch_add(1, Ordering::Relaxed);
        if key.starts_with(STATE_PREFIX) {
            self.state_reads.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn put(&self, key: &str) {
        self.puts.fetch_add(1, Ordering::Relaxed);
        if key.starts_with(STATE_PREFIX) {
            self.state_writes.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn delete(&self) {
        self.deletes.fetch_add(1, Ordering::Relaxed);
    }

    pub fn scan(&self) {
        self.scans.fetch_add(1, Ordering::Relaxed);
    }

    pub fn conflict(&self) {
        self.cas_conflicts.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> StoreStats {
        StoreStats {
            gets: self.gets.load(Ordering::Relaxed),
            puts: self.puts.load(Ordering::Relaxed),
            deletes: self.deletes.load(Ordering::Relaxed),
            scans: self.scans.load(Ordering::Relaxed),
            cas_conflicts: self.cas_conflicts.load(Ordering::Relaxed),
            state_reads: self.state_reads.load(Ordering::Relaxed),
            state_writes: self.state_writes.load(Ordering::Relaxed),
        }
    }
}

/// Per-key linearizable store with compare-and-set.
///
/// A key that does not exist has version 0; a successful `put_cas` against
/// the current version yields `expected + 1`.
#[async_trait]
pub trait StateStore: Send + Sync {
    async fn get(&self, key: &str) -> Result<VersionedRecord, StoreError>;

    async fn put_cas(&self, key: &str, value: Bytes, expected: u64) -> Result<u64, StoreError>;

    /// Idempotent; deleting an absent key succeeds.
    async fn delete(&self, key: &str) -> Result<(), StoreError>;

    /// All records whose key starts with `prefix`, in key order.
    async fn scan(&self, prefix: &str) -> Result<Vec<VersionedRecord>, StoreError>;

    /// Registers (or heartbeats) a middleware node. Returns the stored entry.
    async fn register_middleware(&self, entry: RegistryEntry) -> Result<RegistryEntry, StoreError>;

    /// Live middleware nodes in registration order.
    async fn list_middleware(&self) -> Result<Vec<RegistryEntry>, StoreError>;

    fn stats(&self) -> StoreStats;
}

pub type SharedStore = Arc<dyn StateStore>;

/// Backend selection, as written in config or `GOLDFISH_STORE`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoreBackend {
    Memory,
    Remote(String),
}

impl std::str::FromStr for StoreBackend {
    type Err = crate::ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "memory" {
            return Ok(Self::Memory);
        }
        let rest = s
            .strip_prefix("remote")
            .map(|r| r.trim_start_matches([':', ' ', '=']).trim())
            .filter(|r| !r.is_empty());
        match rest {
            Some(addr) => Ok(Self::Remote(addr.to_owned())),
            None => Err(crate::ConfigError::new(format!(
                "store must be `memory` or `remote <address>`, got {s:?}"
            ))),
        }
    }
}

impl StoreBackend {
    pub async fn open(&self) -> Result<SharedStore, StoreError> {
        match self {
            Self::Memory => Ok(Arc::new(MemoryStore::new())),
            Self::Remote(addr) => Ok(Arc::new(RemoteStore::connect(addr).await?)),
        }
    }
}
