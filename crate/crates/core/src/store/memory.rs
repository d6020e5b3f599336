// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;
use bytes::Bytes;
use parking_lot::Mutex;

use super::{Counters, StateStore, StoreError, StoreStats, VersionedRecord, DEFAULT_HEARTBEAT_INTERVAL};
use crate::clock::wall_millis;
use crate::records::{middleware_key, RegistryEntry, MIDDLEWARE_PREFIX};

#[derive(Default)]
struct Inner {
    map: BTreeMap<String, (u64, Bytes)>,
    next_seq: u64,
}

/// In-process store: one map behind a mutex, every operation atomic per key.
pub struct MemoryStore {
    inner: Mutex<Inner>,
    counters: Counters,
    heartbeat_interval: Duration,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::with_heartbeat_interval(DEFAULT_HEARTBEAT_INTERVAL)
    }

    pub fn with_heartbeat_interval(heartbeat_interval: Duration) -> Self {
        Self {
            inner: Mutex::new(Inner::default()),
            counters: Counters::default(),
            heartbeat_interval,
        }
    }

    pub fn get_sync(&self, key: &str) -> Result<VersionedRecord, StoreError> {
        self.counters.get(key);
        let inner = self.inner.lock();
        inner
            .map
            .get(key)
            .map(|(version, value)| VersionedRecord {
                key: key.to_owned(),
                value: value.clone(),
                version: *version,
            })
            .ok_or(StoreError::NotFound)
    }

    pub fn put_cas_sync(&self, key: &str, value: Bytes, expected: u64) -> Result<u64, StoreError> {
        self.counters.put(key);
        let mut inner = self.inner.lock();
        let current = inner.map.get(key).map(|(v, _)| *v).unwrap_or(0);
        if current != expected {
            self.counters.conflict();
            return Err(StoreError::CasConflict { current });
        }
        let next = expected + 1;
        inner.map.insert(key.to_owned(), (next, value));
        Ok(next)
    }

    pub fn delete_sync(&self, key: &str) {
        self.counters.delete();
        if self.inner.lock().map.remove(key).is_none() {
            tracing::debug!(key, "delete of absent key");
        }
    }

    pub fn scan_sync(&self, prefix: &str) -> Vec<VersionedRecord> {
        self.counters.scan();
        let inner = self.inner.lock();
        inner
            .map
            .range(prefix.to_owned()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, (version, value))| VersionedRecord {
                key: k.clone(),
                value: value.clone(),
                version: *version,
            })
            .collect()
    }

    pub fn register_sync(&self, mut entry: RegistryEntry) -> RegistryEntry {
        let key = middleware_key(&entry.address);
        self.counters.put(&key);
        let mut inner = self.inner.lock();
        let existing = inner
            .map
            .get(&key)
            .and_then(|(v, raw)| RegistryEntry::decode(raw).ok().map(|e| (*v, e)));
        let version = match existing {
            Some((v, prev)) => {
                entry.seq = prev.seq;
                entry.registered_at_ms = prev.registered_at_ms;
                v
            }
            None => {
                entry.seq = inner.next_seq;
                inner.next_seq += 1;
                0
            }
        };
        inner
            .map
            .insert(key, (version + 1, Bytes::from(entry.encode())));
        entry
    }

    pub fn list_middleware_sync(&self) -> Vec<RegistryEntry> {
        let stale_after = 3 * self.heartbeat_interval.as_millis() as u64;
        let now = wall_millis();
        let mut live: Vec<RegistryEntry> = self
            .scan_sync(MIDDLEWARE_PREFIX)
            .into_iter()
            .filter_map(|r| RegistryEntry::decode(&r.value).ok())
            .filter(|e| now.saturating_sub(e.heartbeat_ms) <= stale_after)
            .collect();
        live.sort_by_key(|e| e.seq);
        live
    }
}

impl Default for MemoryStore {
    fn default() -> Self {
        Self::new()
    }
}

#[async_trait]
impl StateStore for MemoryStore {
    async fn get(&self, key: &str) -> Result<VersionedRecord, StoreError> {
        self.get_sync(key)
    }

    async fn put_cas(&self, key: &str, value: Bytes, expected: u64) -> Result<u64, StoreError> {
        self.put_cas_sync(key, value, expected)
    }

    async fn delete(&self, key: &str) -> Result<(), StoreError> {
        self.delete_sync(key);
        Ok(())
    }

    async fn scan(&self, prefix: &str) -> Result<Vec<VersionedRecord>, StoreError> {
        Ok(self.scan_sync(prefix))
    }

    async fn register_middleware(&self, entry: RegistryEntry) -> Result<RegistryEntry, StoreError> {
        Ok(self.register_sync(entry))
    }

    async fn list_middleware(&self) -> Result<Vec<RegistryEntry>, StoreError> {
        Ok(self.list_middleware_sync())
    }

    fn stats(&self) -> StoreStats {
        self.counters.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::NodeAddr;
    use std::sync::{Arc, Barrier};

    #[test]
    fn cas_semantics() {
        let s = MemoryStore::new();
        assert_eq!(s.put_cas_sync("k", Bytes::from_static(b"a"), 0).unwrap(), 1);
        assert!(matches!(
            s.put_cas_sync("k", Bytes::from_static(b"b"), 0),
            Err(StoreError::CasConflict { current: 1 })
        ));
        let r = s.get_sync("k").unwrap();
        assert_eq!((&r.value[..], r.version), (&b"a"[..], 1));
        assert_eq!(s.put_cas_sync("k", Bytes::from_static(b"c"), 1).unwrap(), 2);
    }

    #[test]
    fn delete_is_idempotent() {
        let s = MemoryStore::new();
        s.put_cas_sync("k", Bytes::new(), 0).unwrap();
        s.delete_sync("k");
        assert!(matches!(s.get_sync("k"), Err(StoreError::NotFound)));
        s.delete_sync("k");
        assert_eq!(s.stats().deletes, 2);
    }

    #[test]
    fn racing_cas_has_one_winner() {
        let s = Arc::new(MemoryStore::new());
        for trial in 0..1000 {
            let key = format!("race/{trial}");
            let barrier = Arc::new(Barrier::new(2));
            let handles: Vec<_> = (0..2)
                .map(|i| {
                    let (s, b, key) = (s.clone(), barrier.clone(), key.clone());
                    std::thread::spawn(move || {
                        b.wait();
                        s.put_cas_sync(&key, Bytes::from(vec![i as u8]), 0).is_ok()
                    })
                })
                .collect();
            let wins = handles.into_iter().map(|h| h.join().unwrap()).filter(|w| *w).count();
            assert_eq!(wins, 1, "trial {trial}");
        }
    }

    #[test]
    fn registry_order_and_staleness() {
        let s = MemoryStore::with_heartbeat_interval(Duration::from_millis(100));
        let now = wall_millis();
        s.register_sync(RegistryEntry::new(NodeAddr::new("b"), now));
        s.register_sync(RegistryEntry::new(NodeAddr::new("a"), now));
        let stale = RegistryEntry::new(NodeAddr::new("c"), now - 10_000);
        s.register_sync(stale);
        let names: Vec<_> = s.list_middleware_sync().into_iter().map(|e| e.address.0).collect();
        assert_eq!(names, ["b", "a"]);
        // heartbeat keeps the original position
        let again = s.register_sync(RegistryEntry::new(NodeAddr::new("b"), now + 1));
        assert_eq!(again.seq, 0);
        assert_eq!(s.list_middleware_sync()[0].address.0, "b");
    }
}
