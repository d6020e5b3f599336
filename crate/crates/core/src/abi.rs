// Copyright 2026 The goldfish Authors
// SPDX-License-Identifier: Apache-2.0

//! Byte layout exchanged with guest modules.
//!
//! Input written at the pointer returned by `gf_alloc`:
//! `u32 state_len | state | u32 payload_len | payload`.
//!
//! Output found at the pointer returned by `gf_handle`:
//! `u8 directive | u32 new_state_len | new_state | u32 output_len | output |
//!  u16 outbound_count | repeated{ u8 target_kind | u16 target_len | target | u32 payload_len | payload }`.
//!
//! All integers little-endian. An actor-id target is the 16 raw id bytes.

use bytes::Bytes;

use crate::message::{Directive, Target};
use crate::wire::{read_target, write_target, Reader, WireError, Writer};

pub fn encode_input(state: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes32(state);
    w.bytes32(payload);
    w.finish()
}

pub fn decode_input(buf: &[u8]) -> Result<(Bytes, Bytes), WireError> {
    let mut r = Reader::new(buf);
    let state = Bytes::copy_from_slice(r.bytes32()?);
    let payload = Bytes::copy_from_slice(r.bytes32()?);
    r.expect_end()?;
    Ok((state, payload))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub target: Target,
    pub payload: Bytes,
}

impl Outbound {
    pub fn new(target: Target, payload: impl Into<Bytes>) -> Self {
        Self {
            target,
            payload: payload.into(),
        }
    }
}

/// Decoded guest result record.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GuestOutput {
    pub directive: Directive,
    pub new_state: Bytes,
    pub output: Bytes,
    pub outbound: Vec<Outbound>,
}

impl GuestOutput {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.directive.code());
        w.bytes32(&self.new_state);
        w.bytes32(&self.output);
        w.u16(self.outbound.len() as u16);
        for ob in &self.outbound {
            write_outbound(&mut w, ob);
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let directive = Directive::from_code(r.u8()?).ok_or(WireError::BadValue("directive"))?;
        let new_state = Bytes::copy_from_slice(r.bytes32()?);
        let output = Bytes::copy_from_slice(r.bytes32()?);
        let count = r.u16()?;
        let mut outbound = Vec::with_capacity(count as usize);
        for _ in 0..count {
            outbound.push(read_outbound(&mut r)?);
        }
        r.expect_end()?;
        Ok(Self {
            directive,
            new_state,
            output,
            outbound,
        })
    }
}

pub(crate) fn write_outbound(w: &mut Writer, ob: &Outbound) {
    write_target(w, &ob.target);
    w.bytes32(&ob.payload);
}

pub(crate) fn read_outbound(r: &mut Reader<'_>) -> Result<Outbound, WireError> {
    let target = read_target(r)?;
    let payload = Bytes::copy_from_slice(r.bytes32()?);
    Ok(Outbound { target, payload })
}

/// Encodes a list of outbound entries as `u16 count | entries`, the tail of a
/// result record. Guests that forward messages can copy this verbatim.
pub fn encode_outbound_list(list: &[Outbound]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u16(list.len() as u16);
    for ob in list {
        write_outbound(&mut w, ob);
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ActorId;

    #[test]
    fn input_layout() {
        assert_eq!(
            encode_input(b"7", b"inc"),
            vec![1, 0, 0, 0, b'7', 3, 0, 0, 0, b'i', b'n', b'c']
        );
        let (s, p) = decode_input(&encode_input(b"", b"x")).unwrap();
        assert!(s.is_empty());
        assert_eq!(&p[..], b"x");
    }

    #[test]
    fn output_layout() {
        let id = ActorId::from_bytes([7; 16]);
        let out = GuestOutput {
            directive: Directive::Reject,
            new_state: Bytes::from_static(b"s"),
            output: Bytes::from_static(b"o"),
            outbound: vec![
                Outbound::new(Target::Actor(id), &b"p"[..]),
                Outbound::new(Target::handler("h"), Bytes::new()),
            ],
        };
        let enc = out.encode();
        let mut expect = vec![2, 1, 0, 0, 0, b's', 1, 0, 0, 0, b'o', 2, 0];
        expect.extend_from_slice(&[0, 16, 0]);
        expect.extend_from_slice(&[7; 16]);
        expect.extend_from_slice(&[1, 0, 0, 0, b'p']);
        expect.extend_from_slice(&[1, 1, 0, b'h', 0, 0, 0, 0]);
        assert_eq!(enc, expect);
        assert_eq!(GuestOutput::decode(&enc).unwrap(), out);
    }

    #[test]
    fn malformed_output() {
        assert!(GuestOutput::decode(&[3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        assert!(GuestOutput::decode(&[0, 5, 0, 0, 0]).is_err());
        // actor-id target of the wrong width
        let mut bad = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 3, 0, 1, 2, 3, 0, 0, 0, 0];
        assert!(GuestOutput::decode(&bad).is_err());
        bad.truncate(3);
        assert!(GuestOutput::decode(&bad).is_err());
    }
}
