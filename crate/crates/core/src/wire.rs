// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Length-prefixed binary framing shared by the node-to-node transport and the
//! remote state store.
//!
//! A frame is `u32 frame_len | u8 frame_type | body`, where `frame_len` counts
//! the type byte plus the body. All integers are little-endian.

use bytes::Bytes;
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::ids::{ActorId, MessageId};
use crate::message::{Message, Target};
use crate::records::RegistryEntry;

/// Upper bound on a single frame, type byte included.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated input")]
    Truncated,
    #[error("trailing bytes after record")]
    Trailing,
    #[error("invalid {0}")]
    BadValue(&'static str),
    #[error("frame of {0} bytes exceeds limit")]
    FrameTooLarge(u32),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self { buf: Vec::new() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn bytes16(&mut self, v: &[u8]) {
        self.u16(v.len() as u16);
        self.bytes(v);
    }

    pub fn bytes32(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.bytes(v);
    }

    pub fn str16(&mut self, v: &str) {
        self.bytes16(v.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::BadValue("bool")),
        }
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn array16(&mut self) -> Result<[u8; 16], WireError> {
        Ok(self.take(16)?.try_into().unwrap())
    }

    pub fn bytes16(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    pub fn bytes32(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn str16(&mut self) -> Result<String, WireError> {
        String::from_utf8(self.bytes16()?.to_vec()).map_err(|_| WireError::BadValue("utf-8"))
    }

    pub fn expect_end(&self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::Trailing)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    Msg = 0,
    Block = 1,
    Unblock = 2,
    Register = 3,
    Deregister = 4,
    Ack = 5,
    Err = 6,
    KvGet = 7,
    KvPut = 8,
    KvDelete = 9,
    KvValue = 10,
    KvScan = 11,
    KvEntries = 12,
    ListMiddleware = 13,
    MiddlewareList = 14,
}

impl FrameType {
    pub fn from_code(code: u8) -> Option<Self> {
        use FrameType::*;
        Some(match code {
            0 => Msg,
            1 => Block,
            2 => Unblock,
            3 => Register,
            4 => Deregister,
            5 => Ack,
            6 => Err,
            7 => KvGet,
            8 => KvPut,
            9 => KvDelete,
            10 => KvValue,
            11 => KvScan,
            12 => KvEntries,
            13 => ListMiddleware,
            14 => MiddlewareList,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub body: Bytes,
}

impl Frame {
    pub fn new(kind: FrameType, body: impl Into<Bytes>) -> Self {
        Self {
            kind,
            body: body.into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.body.len());
        out.extend_from_slice(&(self.body.len() as u32 + 1).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.body);
        out
    }

    /// Decodes one complete frame occupying all of `buf`.
    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let len = r.u32()?;
        if len == 0 {
            return Err(WireError::BadValue("frame length"));
        }
        if len > MAX_FRAME_LEN {
            return Err(WireError::FrameTooLarge(len));
        }
        let kind = FrameType::from_code(r.u8()?).ok_or(WireError::BadValue("frame type"))?;
        let body = r.take(len as usize - 1)?;
        r.expect_end()?;
        Ok(Self::new(kind, Bytes::copy_from_slice(body)))
    }
}

pub async fn write_frame<W: AsyncWrite + Unpin>(w: &mut W, frame: &Frame) -> Result<(), WireError> {
    w.write_all(&frame.encode()).await?;
    w.flush().await?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> Result<Option<Frame>, WireError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len);
    if len == 0 {
        return Err(WireError::BadValue("frame length"));
    }
    if len > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge(len));
    }
    let mut rest = vec![0u8; len as usize];
    r.read_exact(&mut rest).await?;
    let kind = FrameType::from_code(rest[0]).ok_or(WireError::BadValue("frame type"))?;
    Ok(Some(Frame::new(kind, Bytes::from(rest).slice(1..))))
}

/// `message_id 16B | u8 target_kind | u16 target_len | target | u8 hop_count | u32 payload_len | payload`
pub fn encode_message(msg: &Message) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(msg.message_id.as_bytes());
    write_target(&mut w, &msg.target);
    w.u8(msg.hop_count);
    w.bytes32(&msg.payload);
    w.finish()
}

pub fn decode_message(buf: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader::new(buf);
    let message_id = MessageId::from_bytes(r.array16()?);
    let target = read_target(&mut r)?;
    let hop_count = r.u8()?;
    let payload = Bytes::copy_from_slice(r.bytes32()?);
    r.expect_end()?;
    let mut msg = Message::new(target, payload);
    msg.message_id = message_id;
    msg.hop_count = hop_count;
    Ok(msg)
}

/// `u8 target_kind (0=actor_id,1=handler_name) | u16 target_len | target`
pub(crate) fn write_target(w: &mut Writer, target: &Target) {
    w.u8(target.kind_code());
    match target {
        Target::Actor(id) => w.bytes16(id.as_bytes()),
        Target::Handler(name) => w.str16(name),
    }
}

pub(crate) fn read_target(r: &mut Reader<'_>) -> Result<Target, WireError> {
    let kind = r.u8()?;
    let raw = r.bytes16()?;
    match kind {
        0 => {
            let bytes: [u8; 16] = raw.try_into().map_err(|_| WireError::BadValue("actor id"))?;
            Ok(Target::Actor(ActorId::from_bytes(bytes)))
        }
        1 => String::from_utf8(raw.to_vec())
            .map(Target::Handler)
            .map_err(|_| WireError::BadValue("handler name")),
        _ => Err(WireError::BadValue("target kind")),
    }
}

/// Error codes carried in `ERR` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    Internal = 0,
    NotFound = 1,
    CasConflict = 2,
    NoRoute = 3,
    HopLimitExceeded = 4,
    Timeout = 5,
    AlreadyBlocked = 6,
    AlreadyUnblocked = 7,
    UnknownActor = 8,
    BadRequest = 9,
    ShuttingDown = 10,
    Failed = 11,
}

impl ErrorCode {
    pub fn from_code(code: u16) -> Self {
        use ErrorCode::*;
        match code {
            1 => NotFound,
            2 => CasConflict,
            3 => NoRoute,
            4 => HopLimitExceeded,
            5 => Timeout,
            6 => AlreadyBlocked,
            7 => AlreadyUnblocked,
            8 => UnknownActor,
            9 => BadRequest,
            10 => ShuttingDown,
            11 => Failed,
            _ => Internal,
        }
    }
}

/// Body of an `ERR` frame: `u16 code | u64 detail | u32 msg_len | msg`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub detail: u64,
    pub message: String,
}

impl ErrorBody {
    pub fn new(code: ErrorCode, detail: u64, message: impl Into<String>) -> Self {
        Self {
            code,
            detail,
            message: message.into(),
        }
    }

    pub fn frame(&self) -> Frame {
        let mut w = Writer::new();
        w.u16(self.code as u16);
        w.u64(self.detail);
        w.bytes32(self.message.as_bytes());
        Frame::new(FrameType::Err, w.finish())
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let code = ErrorCode::from_code(r.u16()?);
        let detail = r.u64()?;
        let message = String::from_utf8_lossy(r.bytes32()?).into_owned();
        r.expect_end()?;
        Ok(Self {
            code,
            detail,
            message,
        })
    }
}

/// `ACK` body answering a `MSG`: `message_id 16B | u32 output_len | output`.
pub fn encode_msg_ack(id: &MessageId, output: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(id.as_bytes());
    w.bytes32(output);
    w.finish()
}

pub fn decode_msg_ack(buf: &[u8]) -> Result<(MessageId, Bytes), WireError> {
    let mut r = Reader::new(buf);
    let id = MessageId::from_bytes(r.array16()?);
    let out = Bytes::copy_from_slice(r.bytes32()?);
    r.expect_end()?;
    Ok((id, out))
}

pub fn encode_actor_id(id: &ActorId) -> Vec<u8> {
    id.as_bytes().to_vec()
}

pub fn decode_actor_id(buf: &[u8]) -> Result<ActorId, WireError> {
    let bytes: [u8; 16] = buf.try_into().map_err(|_| WireError::BadValue("actor id"))?;
    Ok(ActorId::from_bytes(bytes))
}

/// Requests understood by the remote state store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KvRequest {
    Get { key: String },
    PutCas { key: String, expected: u64, value: Bytes },
    Delete { key: String },
    Scan { prefix: String },
    Register { entry: RegistryEntry },
    ListMiddleware,
}

impl KvRequest {
    pub fn frame(&self) -> Frame {
        let mut w = Writer::new();
        let kind = match self {
            Self::Get { key } => {
                w.str16(key);
                FrameType::KvGet
            }
            Self::PutCas {
                key,
                expected,
                value,
            } => {
                w.str16(key);
                w.u64(*expected);
                w.bytes32(value);
                FrameType::KvPut
            }
            Self::Delete { key } => {
                w.str16(key);
                FrameType::KvDelete
            }
            Self::Scan { prefix } => {
                w.str16(prefix);
                FrameType::KvScan
            }
            Self::Register { entry } => {
                entry.write(&mut w);
                FrameType::Register
            }
            Self::ListMiddleware => FrameType::ListMiddleware,
        };
        Frame::new(kind, w.finish())
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, WireError> {
        let mut r = Reader::new(&frame.body);
        let req = match frame.kind {
            FrameType::KvGet => Self::Get { key: r.str16()? },
            FrameType::KvPut => Self::PutCas {
                key: r.str16()?,
                expected: r.u64()?,
                value: Bytes::copy_from_slice(r.bytes32()?),
            },
            FrameType::KvDelete => Self::Delete { key: r.str16()? },
            FrameType::KvScan => Self::Scan {
                prefix: r.str16()?,
            },
            FrameType::Register => Self::Register {
                entry: RegistryEntry::read(&mut r)?,
            },
            FrameType::ListMiddleware => Self::ListMiddleware,
            _ => return Err(WireError::BadValue("store request type")),
        };
        r.expect_end()?;
        Ok(req)
    }
}

/// `KV_VALUE` body: `u64 version | u32 value_len | value`.
pub fn encode_value(version: u64, value: &[u8]) -> Frame {
    let mut w = Writer::new();
    w.u64(version);
    w.bytes32(value);
    Frame::new(FrameType::KvValue, w.finish())
}

pub fn decode_value(buf: &[u8]) -> Result<(u64, Bytes), WireError> {
    let mut r = Reader::new(buf);
    let version = r.u64()?;
    let value = Bytes::copy_from_slice(r.bytes32()?);
    r.expect_end()?;
    Ok((version, value))
}

/// `KV_ENTRIES` body: `u32 count | repeated{ u16 key_len | key | u64 version | u32 value_len | value }`.
pub fn encode_entries(entries: &[(String, u64, Bytes)]) -> Frame {
    let mut w = Writer::new();
    w.u32(entries.len() as u32);
    for (k, v, val) in entries {
        w.str16(k);
        w.u64(*v);
        w.bytes32(val);
    }
    Frame::new(FrameType::KvEntries, w.finish())
}

pub fn decode_entries(buf: &[u8]) -> Result<Vec<(String, u64, Bytes)>, WireError> {
    let mut r = Reader::new(buf);
    let n = r.u32()?;
    let mut out = Vec::with_capacity(n.min(4096) as usize);
    for _ in 0..n {
        let k = r.str16()?;
        let v = r.u64()?;
        let val = Bytes::copy_from_slice(r.bytes32()?);
        out.push((k, v, val));
    }
    r.expect_end()?;
    Ok(out)
}

/// `MW_LIST` body: `u32 count | repeated{ RegistryEntry }`.
pub fn encode_middleware_list(entries: &[RegistryEntry]) -> Frame {
    let mut w = Writer::new();
    w.u32(entries.len() as u32);
    for e in entries {
        e.write(&mut w);
    }
    Frame::new(FrameType::MiddlewareList, w.finish())
}

pub fn decode_middleware_list(buf: &[u8]) -> Result<Vec<RegistryEntry>, WireError> {
    let mut r = Reader::new(buf);
    let n = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..n {
        out.push(RegistryEntry::read(&mut r)?);
    }
    r.expect_end()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_layout() {
        let f = Frame::new(FrameType::Block, vec![0xAA, 0xBB]);
        assert_eq!(f.encode(), vec![3, 0, 0, 0, 1, 0xAA, 0xBB]);
        assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
    }

    #[test]
    fn message_layout() {
        let mut m = Message::new(Target::handler("ab"), vec![9u8]);
        m.message_id = MessageId::from_bytes([1; 16]);
        m.hop_count = 2;
        let enc = encode_message(&m);
        let mut expect = vec![1u8; 16];
        expect.extend_from_slice(&[1, 2, 0, b'a', b'b', 2, 1, 0, 0, 0, 9]);
        assert_eq!(enc, expect);
        assert_eq!(decode_message(&enc).unwrap(), m);
    }

    #[test]
    fn bad_frames() {
        assert!(matches!(Frame::decode(&[0, 0, 0, 0]), Err(WireError::BadValue(_))));
        assert!(matches!(Frame::decode(&[1, 0, 0, 0, 99]), Err(WireError::BadValue(_))));
        assert!(matches!(Frame::decode(&[5, 0, 0, 0, 0]), Err(WireError::Truncated)));
        assert!(matches!(
            Frame::decode(&[0xff, 0xff, 0xff, 0xff, 0]),
            Err(WireError::FrameTooLarge(_))
        ));
    }

    #[tokio::test]
    async fn async_framing_over_a_pipe() {
        let (mut a, mut b) = tokio::io::duplex(64);
        let f = ErrorBody::new(ErrorCode::CasConflict, 7, "stale").frame();
        let sent = f.clone();
        tokio::spawn(async move { write_frame(&mut a, &sent).await.unwrap() });
        let got = read_frame(&mut b).await.unwrap().unwrap();
        assert_eq!(got, f);
        let body = ErrorBody::decode(&got.body).unwrap();
        assert_eq!(body.code, ErrorCode::CasConflict);
        assert_eq!(body.detail, 7);
        assert!(read_frame(&mut b).await.unwrap().is_none());
    }

    proptest! {
        #[test]
        fn messages_round_trip(
            id in any::<[u8; 16]>(),
            by_id in any::<bool>(),
            raw in any::<[u8; 16]>(),
            name in "[a-z]{1,12}",
            hop in any::<u8>(),
            payload in proptest::collection::vec(any::<u8>(), 0..256),
        ) {
            let target = if by_id { Target::Actor(ActorId::from_bytes(raw)) } else { Target::Handler(name) };
            let mut m = Message::new(target, payload);
            m.message_id = MessageId::from_bytes(id);
            m.hop_count = hop;
            let frame = Frame::new(FrameType::Msg, encode_message(&m));
            let back = Frame::decode(&frame.encode()).unwrap();
            prop_assert_eq!(decode_message(&back.body).unwrap(), m);
        }

        #[test]
        fn kv_requests_round_trip(key in "[a-z/]{0,20}", expected in any::<u64>(), value in proptest::collection::vec(any::<u8>(), 0..64)) {
            for req in [
                KvRequest::Get { key: key.clone() },
                KvRequest::PutCas { key: key.clone(), expected, value: Bytes::from(value.clone()) },
                KvRequest::Delete { key: key.clone() },
                KvRequest::Scan { prefix: key.clone() },
                KvRequest::ListMiddleware,
            ] {
                prop_assert_eq!(KvRequest::from_frame(&req.frame()).unwrap(), req);
            }
        }
    }
}
