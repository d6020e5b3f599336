// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Cross-node transport: the middleware operations over length-prefixed
//! frames on a stream socket. One request frame, one reply frame.

use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;
use tracing::debug;

use crate::middleware::BlockError;
use crate::node::Cluster;
use crate::records::RegistryEntry;
use crate::wire::{
    decode_actor_id, decode_message, encode_msg_ack, read_frame, write_frame, ErrorBody, ErrorCode, Frame, FrameType,
};

/// Accepts frame connections until dropped.
pub struct FrameServer {
    local_addr: SocketAddr,
    task: JoinHandle<()>,
}

impl FrameServer {
    pub async fn bind(addr: &str, cluster: Arc<Cluster>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let local_addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            loop {
                let Ok((sock, peer)) = listener.accept().await else { return };
                let cluster = cluster.clone();
                tokio::spawn(async move {
                    if let Err(e) = serve(sock, cluster).await {
                        debug!(%peer, error = %e, "frame connection closed");
                    }
                });
            }
        });
        Ok(Self { local_addr, task })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }
}

impl Drop for FrameServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve(mut sock: TcpStream, cluster: Arc<Cluster>) -> Result<(), crate::wire::WireError> {
    sock.set_nodelay(true)?;
    while let Some(frame) = read_frame(&mut sock).await? {
        let reply = handle(&cluster, frame).await;
        write_frame(&mut sock, &reply).await?;
    }
    Ok(())
}

fn err(code: ErrorCode, msg: impl Into<String>) -> Frame {
    ErrorBody::new(code, 0, msg).frame()
}

fn block_err(e: BlockError) -> Frame {
    let code = match &e {
        BlockError::AlreadyBlocked(_) => ErrorCode::AlreadyBlocked,
        BlockError::AlreadyUnblocked(_) => ErrorCode::AlreadyUnblocked,
        BlockError::UnknownActor(_) => ErrorCode::UnknownActor,
        BlockError::Store(_) => ErrorCode::Internal,
    };
    err(code, e.to_string())
}

async fn handle(cluster: &Cluster, frame: Frame) -> Frame {
    let mw = cluster.nodes()[0].middleware();
    let ack = |body: Vec<u8>| Frame::new(FrameType::Ack, body);
    match frame.kind {
        FrameType::Msg => match decode_message(&frame.body) {
            Ok(msg) => {
                let id = msg.message_id;
                match cluster.submit(msg, true).await {
                    Ok(inv) => ack(encode_msg_ack(&id, inv.output.as_deref().unwrap_or_default())),
                    Err(e) => err(e.code(), e.to_string()),
                }
            }
            Err(e) => err(ErrorCode::BadRequest, e.to_string()),
        },
        FrameType::Block | FrameType::Unblock | FrameType::Deregister => {
            let id = match decode_actor_id(&frame.body) {
                Ok(id) => id,
                Err(e) => return err(ErrorCode::BadRequest, e.to_string()),
            };
            let result = match frame.kind {
                FrameType::Block => mw.block(&id).await.map(|_| ()),
                FrameType::Unblock => mw.unblock(&id).await.map(|_| ()),
                _ => mw.deregister(&id).await,
            };
            match result {
                Ok(()) => ack(Vec::new()),
                Err(e) => block_err(e),
            }
        }
        FrameType::Register => match RegistryEntry::decode(&frame.body) {
            Ok(entry) => match cluster.store().register_middleware(entry).await {
                Ok(e) => ack(e.encode()),
                Err(e) => err(ErrorCode::Internal, e.to_string()),
            },
            Err(e) => err(ErrorCode::BadRequest, e.to_string()),
        },
        other => err(ErrorCode::BadRequest, format!("unexpected frame {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guests;
    use crate::message::{Message, Target};
    use crate::node::ClusterConfig;
    use crate::runtime::HandlerSpec;
    use crate::wire::{decode_msg_ack, encode_actor_id, encode_message};

    async fn call(sock: &mut TcpStream, f: Frame) -> Frame {
        write_frame(sock, &f).await.unwrap();
        read_frame(sock).await.unwrap().unwrap()
    }

    #[tokio::test(flavor = "multi_thread", worker_threads = 2)]
    async fn message_and_block_frames() {
        let cluster = Arc::new(Cluster::in_memory(ClusterConfig::default()).await.unwrap());
        cluster.deploy(HandlerSpec::new("echo", guests::echo())).unwrap();
        let server = FrameServer::bind("127.0.0.1:0", cluster.clone()).await.unwrap();
        let mut sock = TcpStream::connect(server.local_addr()).await.unwrap();

        let msg = Message::new(Target::handler("echo"), "over the wire");
        let reply = call(&mut sock, Frame::new(FrameType::Msg, encode_message(&msg))).await;
        assert_eq!(reply.kind, FrameType::Ack);
        let (id, out) = decode_msg_ack(&reply.body).unwrap();
        assert_eq!(id, msg.message_id);
        assert_eq!(out.as_ref(), b"over the wire");

        let actor = cluster.status().await.nodes[0].actors[0].actor_id;
        let body = encode_actor_id(&actor);
        assert_eq!(call(&mut sock, Frame::new(FrameType::Block, body.clone())).await.kind, FrameType::Ack);
        let again = call(&mut sock, Frame::new(FrameType::Block, body.clone())).await;
        assert_eq!(ErrorBody::decode(&again.body).unwrap().code, ErrorCode::AlreadyBlocked);
        assert_eq!(call(&mut sock, Frame::new(FrameType::Unblock, body)).await.kind, FrameType::Ack);

        let bad = call(&mut sock, Frame::new(FrameType::Msg, vec![1, 2, 3])).await;
        assert_eq!(ErrorBody::decode(&bad.body).unwrap().code, ErrorCode::BadRequest);
        cluster.shutdown().await;
    }
}
