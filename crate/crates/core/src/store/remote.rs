// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Network store backend speaking the frame protocol over TCP.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use bytes::Bytes;
use parking_lot::Mutex;
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use super::{Counters, MemoryStore, StateStore, StoreError, StoreStats, VersionedRecord};
use crate::records::RegistryEntry;
use crate::wire::{
    decode_entries, decode_middleware_list, decode_value, encode_entries, encode_middleware_list,
    encode_value, read_frame, write_frame, ErrorBody, ErrorCode, Frame, FrameType, KvRequest,
    WireError,
};

/// Serves a [`MemoryStore`] to remote clients.
pub struct StoreServer {
    addr: SocketAddr,
    task: JoinHandle<()>,
    store: Arc<MemoryStore>,
}

impl StoreServer {
    pub async fn bind(addr: &str, store: Arc<MemoryStore>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let backing = store.clone();
        let task = tokio::spawn(async move {
            loop {
                let Ok((sock, peer)) = listener.accept().await else {
                    continue;
                };
                let _ = sock.set_nodelay(true);
                let store = backing.clone();
                tokio::spawn(async move {
                    if let Err(e) = serve_conn(sock, store).await {
                        tracing::debug!(%peer, error = %e, "store connection closed");
                    }
                });
            }
        });
        Ok(Self { addr, task, store })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn store(&self) -> &Arc<MemoryStore> {
        &self.store
    }
}

impl Drop for StoreServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve_conn(mut sock: TcpStream, store: Arc<MemoryStore>) -> Result<(), WireError> {
    while let Some(frame) = read_frame(&mut sock).await? {
        let reply = match KvRequest::from_frame(&frame) {
            Ok(req) => handle(&store, req),
            Err(e) => ErrorBody::new(ErrorCode::BadRequest, 0, e.to_string()).frame(),
        };
        write_frame(&mut sock, &reply).await?;
    }
    Ok(())
}

fn handle(store: &MemoryStore, req: KvRequest) -> Frame {
    match req {
        KvRequest::Get { key } => match store.get_sync(&key) {
            Ok(rec) => encode_value(rec.version, &rec.value),
            Err(e) => error_frame(&e),
        },
        KvRequest::PutCas {
            key,
            expected,
            value,
        } => match store.put_cas_sync(&key, value, expected) {
            Ok(v) => encode_value(v, &[]),
            Err(e) => error_frame(&e),
        },
        KvRequest::Delete { key } => {
            store.delete_sync(&key);
            Frame::new(FrameType::Ack, Bytes::new())
        }
        KvRequest::Scan { prefix } => {
            let entries: Vec<_> = store
                .scan_sync(&prefix)
                .into_iter()
                .map(|r| (r.key, r.version, r.value))
                .collect();
            encode_entries(&entries)
        }
        KvRequest::Register { entry } => encode_middleware_list(&[store.register_sync(entry)]),
        KvRequest::ListMiddleware => encode_middleware_list(&store.list_middleware_sync()),
    }
}

fn error_frame(e: &StoreError) -> Frame {
    match e {
        StoreError::NotFound => ErrorBody::new(ErrorCode::NotFound, 0, "not found"),
        StoreError::CasConflict { current } => {
            ErrorBody::new(ErrorCode::CasConflict, *current, "cas conflict")
        }
        other => ErrorBody::new(ErrorCode::Internal, 0, other.to_string()),
    }
    .frame()
}

/// Client for a [`StoreServer`], with an optional injected one-way delay
/// applied before each request and after each response.
pub struct RemoteStore {
    addr: String,
    pool: Mutex<Vec<TcpStream>>,
    one_way_delay: Duration,
    counters: Counters,
}

impl RemoteStore {
    pub async fn connect(addr: &str) -> Result<Self, StoreError> {
        let first = dial(addr).await?;
        Ok(Self {
            addr: addr.to_owned(),
            pool: Mutex::new(vec![first]),
            one_way_delay: Duration::ZERO,
            counters: Counters::default(),
        })
    }

    pub fn with_injected_delay(mut self, one_way: Duration) -> Self {
        self.one_way_delay = one_way;
        self
    }

    pub fn injected_delay(&self) -> Duration {
        self.one_way_delay
    }

    async fn request(&self, frame: Frame) -> Result<Frame, StoreError> {
        let pooled = self.pool.lock().pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => dial(&self.addr).await?,
        };
        if !self.one_way_delay.is_zero() {
            tokio::time::sleep(self.one_way_delay).await;
        }
        let reply = async {
            write_frame(&mut conn, &frame).await?;
            read_frame(&mut conn).await
        }
        .await
        .map_err(|e| StoreError::Unavailable(e.to_string()))?
        .ok_or_else(|| StoreError::Unavailable("connection closed".into()))?;
        if !self.one_way_delay.is_zero() {
            tokio::time::sleep(self.one_way_delay).await;
        }
        self.pool.lock().push(conn);
        if reply.kind == FrameType::Err {
            let body = ErrorBody::decode(&reply.body)?;
            return Err(match body.code {
                ErrorCode::NotFound => StoreError::NotFound,
                ErrorCode::CasConflict => StoreError::CasConflict {
                    current: body.detail,
                },
                _ => StoreError::Unavailable(body.message),
            });
        }
        Ok(reply)
    }

    fn expect(frame: &Frame, kind: FrameType) -> Result<(), StoreError> {
        if frame.kind == kind {
            Ok(())
        } else {
            Err(StoreError::Corrupt(WireError::BadValue("reply type")))
        }
    }
}

async fn dial(addr: &str) -> Result<TcpStream, StoreError> {
    let sock = TcpStream::connect(addr)
        .await
        .map_err(|e| StoreError::Unavailable(format!("{addr}: {e}")))?;
    let _ = sock.set_nodelay(true);
    Ok(sock)
}

#[async_trait]
impl StateStore for RemoteStore {
    async fn get(&self, key: &str) -> Result<VersionedRecord, StoreError> {
        self.counters.get(key);
        let reply = self.request(KvRequest::Get { key: key.into() }.frame()).await?;
        Self::expect(&reply, FrameType::KvValue)?;
        let (version, value) = decode_value(&reply.body)?;
        Ok(VersionedRecord {
            key: key.to_owned(),
            value,
            version,
        })
    }

    async fn put_cas(&self, key: &str, value: Bytes, expected: u64) -> Result<u64, StoreError> {
        self.counters.put(key);
        let req = KvRequest::PutCas {
            key: key.into(),
            expected,
            value,
        };
        match self.request(req.frame()).await {
            Ok(reply) => {
                Self::expect(&reply, FrameType::KvValue)?;
                Ok(decode_value(&reply.body)?.0)
            }
            Err(e) => {
                if matches!(e, StoreError::CasConflict { .. }) {
                    self.counters.conflict();
                }
                Err(e)
            }
        }
    }

    async fn delete(&self, key: &str) -> Result<(), StoreError> {
        self.counters.delete();
        let reply = self.request(KvRequest::Delete { key: key.into() }.frame()).await?;
        Self::expect(&reply, FrameType::Ack)
    }

    async fn scan(&self, prefix: &str) -> Result<Vec<VersionedRecord>, StoreError> {
        self.counters.scan();
        let reply = self
            .request(KvRequest::Scan { prefix: prefix.into() }.frame())
            .await?;
        Self::expect(&reply, FrameType::KvEntries)?;
        Ok(decode_entries(&reply.body)?
            .into_iter()
            .map(|(key, version, value)| VersionedRecord {
                key,
                value,
                version,
            })
            .collect())
    }

    async fn register_middleware(&self, entry: RegistryEntry) -> Result<RegistryEntry, StoreError> {
        let reply = self.request(KvRequest::Register { entry }.frame()).await?;
        Self::expect(&reply, FrameType::MiddlewareList)?;
        decode_middleware_list(&reply.body)?
            .pop()
            .ok_or(StoreError::Corrupt(WireError::Truncated))
    }

    async fn list_middleware(&self) -> Result<Vec<RegistryEntry>, StoreError> {
        let reply = self.request(KvRequest::ListMiddleware.frame()).await?;
        Self::expect(&reply, FrameType::MiddlewareList)?;
        Ok(decode_middleware_list(&reply.body)?)
    }

    fn stats(&self) -> StoreStats {
        self.counters.snapshot()
    }
}
