// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Event traces. Every processed event is folded into a running digest; the
//! entries themselves are kept only when requested.

use collachain_consensus::{BcMessage, ConsensusMessage, RbMessage};
use collachain_core::digest::Hasher;
use collachain_core::Digest;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub at: u64,
    pub chain: u32,
    pub node: u32,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    Deliver {
        from: u32,
        kind: &'static str,
        index: u64,
        /// Compact fingerprint of the message content.
        tag: u64,
    },
    Timer { index: u64, slot: u32, round: u64 },
    Submit { tx: u64, accepted: bool },
    Propose { txs: u64, tag: u64 },
    Commit { index: u64, blocks: u64, tag: u64 },
    Read { ok: bool },
}

impl TraceEntry {
    pub fn index(&self) -> Option<u64> {
        match self.event {
            TraceEvent::Deliver { index, .. } | TraceEvent::Timer { index, .. } | TraceEvent::Commit { index, .. } => {
                Some(index)
            }
            _ => None,
        }
    }

    fn feed(&self, h: &mut Hasher) {
        let mut words = vec![self.at, self.chain as u64, self.node as u64];
        match &self.event {
            TraceEvent::Deliver { from, kind, index, tag } => {
                words.extend([0, *from as u64, kind.len() as u64, kind.as_bytes()[0] as u64, *index, *tag])
            }
            TraceEvent::Timer { index, slot, round } => words.extend([1, *index, *slot as u64, *round]),
            TraceEvent::Submit { tx, accepted } => words.extend([2, *tx, *accepted as u64]),
            TraceEvent::Propose { txs, tag } => words.extend([3, *txs, *tag]),
            TraceEvent::Commit { index, blocks, tag } => words.extend([4, *index, *blocks, *tag]),
            TraceEvent::Read { ok } => words.extend([5, *ok as u64]),
        }
        for w in words {
            h.update(&w.to_le_bytes());
        }
    }
}

/// Content fingerprint of a consensus message.
pub fn fingerprint(msg: &ConsensusMessage) -> u64 {
    match msg {
        ConsensusMessage::Rb { broadcaster, body, .. } => {
            let d = match body {
                RbMessage::Init(b) | RbMessage::Payload(b) => b.proposal_digest(),
                RbMessage::Echo(d) | RbMessage::Ready(d) | RbMessage::Fetch(d) => *d,
            };
            d.low_u64() ^ broadcaster.0 as u64
        }
        ConsensusMessage::Bc { slot, body, .. } => {
            let (round, bits) = match body {
                BcMessage::Est { round, value } | BcMessage::Coord { round, value } => (*round, *value as u64),
                BcMessage::Aux { round, values } => (*round, values.mask() as u64),
            };
            (slot.0 as u64) << 48 | round << 8 | bits
        }
    }
}

#[derive(Default)]
pub struct Trace {
    hasher: Hasher,
    entries: Option<Vec<TraceEntry>>,
    len: u64,
}

impl Trace {
    pub fn new(keep: bool) -> Self {
        Self {
            hasher: Hasher::new(),
            entries: keep.then(Vec::new),
            len: 0,
        }
    }

    pub fn push(&mut self, entry: TraceEntry) {
        entry.feed(&mut self.hasher);
        self.len += 1;
        if let Some(e) = &mut self.entries {
            e.push(entry);
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn digest(&self) -> Digest {
        self.hasher.clone().finish()
    }

    pub fn into_entries(self) -> Vec<TraceEntry> {
        self.entries.unwrap_or_default()
    }

    pub fn entries(&self) -> &[TraceEntry] {
        self.entries.as_deref().unwrap_or_default()
    }
}
