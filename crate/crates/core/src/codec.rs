// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Canonical binary encoding.
//!
//! Every integer is little-endian and fixed width (`u8`, `u32`, `u64`).
//! Variable-length byte strings and lists carry a `u32` length prefix.
//! Optional values are a one-byte flag (`0` absent, `1` present) followed by
//! the value when present. Optional digests inside block headers are always
//! 33 bytes wide (flag plus 32 bytes, zero-filled when absent) so that the
//! header has a fixed length. See `docs/encoding.md` for the per-type layout.

use thiserror::Error;

use crate::digest::{Digest, DIGEST_LEN};

/// Hard ceiling on any single encoded item.
pub const MAX_ITEM_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("encoding limit exceeded: {len} bytes > {limit}")]
    EncodingLimit { len: usize, limit: usize },
    #[error("input truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("{0} trailing bytes after item")]
    TrailingBytes(usize),
    #[error("invalid option flag {0}")]
    InvalidFlag(u8),
    #[error("malformed item: {0}")]
    Malformed(&'static str),
}

pub type CodecResult<T> = Result<T, CodecError>;

#[derive(Default, Debug)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_len(&mut self, len: usize) -> CodecResult<()> {
        let len32 = u32::try_from(len).map_err(|_| CodecError::EncodingLimit {
            len,
            limit: u32::MAX as usize,
        })?;
        self.put_u32(len32);
        Ok(())
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) -> CodecResult<()> {
        self.put_len(bytes.len())?;
        self.put_raw(bytes);
        Ok(())
    }

    pub fn put_digest(&mut self, d: &Digest) {
        self.put_raw(d.as_bytes());
    }

    /// Fixed-width optional digest: flag byte then 32 bytes, zeroed when absent.
    pub fn put_opt_digest_fixed(&mut self, d: Option<&Digest>) {
        match d {
            Some(d) => {
                self.put_u8(1);
                self.put_digest(d);
            }
            None => {
                self.put_u8(0);
                self.put_raw(&[0u8; DIGEST_LEN]);
            }
        }
    }

    pub fn finish(self) -> CodecResult<Vec<u8>> {
        if self.buf.len() > MAX_ITEM_BYTES {
            return Err(CodecError::EncodingLimit {
                len: self.buf.len(),
                limit: MAX_ITEM_BYTES,
            });
        }
        Ok(self.buf)
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> CodecResult<&'a [u8]> {
        if self.remaining() < n {
            return Err(CodecError::Truncated {
                needed: n - self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn get_u8(&mut self) -> CodecResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u32(&mut self) -> CodecResult<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn get_u64(&mut self) -> CodecResult<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn get_len(&mut self) -> CodecResult<usize> {
        let len = self.get_u32()? as usize;
        if len > MAX_ITEM_BYTES {
            return Err(CodecError::EncodingLimit {
                len,
                limit: MAX_ITEM_BYTES,
            });
        }
        Ok(len)
    }

    pub fn get_bytes(&mut self) -> CodecResult<Vec<u8>> {
        let len = self.get_len()?;
        Ok(self.take(len)?.to_vec())
    }

    pub fn get_flag(&mut self) -> CodecResult<bool> {
        match self.get_u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(CodecError::InvalidFlag(other)),
        }
    }

    pub fn get_digest(&mut self) -> CodecResult<Digest> {
        let b = self.take(DIGEST_LEN)?;
        Ok(Digest(b.try_into().expect("32 bytes")))
    }

    pub fn get_opt_digest_fixed(&mut self) -> CodecResult<Option<Digest>> {
        let present = self.get_flag()?;
        let d = self.get_digest()?;
        if present {
            Ok(Some(d))
        } else if d == Digest::ZERO {
            Ok(None)
        } else {
            Err(CodecError::Malformed("absent digest must be zero-filled"))
        }
    }

    pub fn finish(self) -> CodecResult<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

/// Types with a single canonical byte representation.
pub trait Canonical: Sized {
    fn encode_into(&self, w: &mut Writer) -> CodecResult<()>;
    fn decode_from(r: &mut Reader<'_>) -> CodecResult<Self>;

    fn canonical_encode(&self) -> CodecResult<Vec<u8>> {
        let mut w = Writer::new();
        self.encode_into(&mut w)?;
        w.finish()
    }

    fn canonical_decode(bytes: &[u8]) -> CodecResult<Self> {
        let mut r = Reader::new(bytes);
        let item = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(item)
    }
}

/// Decode a `u32`-counted list, rejecting counts that cannot fit in the input.
pub fn decode_list<T, F>(r: &mut Reader<'_>, min_item_len: usize, mut f: F) -> CodecResult<Vec<T>>
where
    F: FnMut(&mut Reader<'_>) -> CodecResult<T>,
{
    let count = r.get_u32()? as usize;
    if count.saturating_mul(min_item_len.max(1)) > r.remaining() {
        return Err(CodecError::Truncated {
            needed: count * min_item_len.max(1) - r.remaining(),
        });
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(f(r)?);
    }
    Ok(out)
}

/// Append a `u32` length prefix followed by `bytes` to a byte sink. Used for
/// length-prefixed record streams (logs, snapshots, workload traces).
pub fn frame(bytes: &[u8]) -> CodecResult<Vec<u8>> {
    let mut w = Writer::with_capacity(bytes.len() + 4);
    w.put_bytes(bytes)?;
    w.finish()
}

/// Split a stream of length-prefixed frames. A torn final frame is reported
/// through the second tuple element instead of failing, so that crash
/// recovery can discard it.
pub fn unframe(stream: &[u8]) -> (Vec<&[u8]>, bool) {
    let mut r = Reader::new(stream);
    let mut frames = Vec::new();
    while r.remaining() > 0 {
        let Ok(len) = r.get_u32() else {
            return (frames, true);
        };
        match r.take(len as usize) {
            Ok(f) => frames.push(f),
            Err(_) => return (frames, true),
        }
    }
    (frames, false)
}
