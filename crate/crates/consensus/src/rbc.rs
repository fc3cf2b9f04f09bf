// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Bracha reliable broadcast of proposed blocks.
//!
//! INIT carries the block; ECHO and READY carry only its digest. A node that
//! collects `2f + 1` READYs for a digest whose block it never received (the
//! broadcaster equivocated) asks peers with FETCH and accepts the first
//! PAYLOAD whose digest matches.

use std::collections::BTreeMap;
use std::sync::Arc;

use collachain_core::{Block, Digest, NodeId};
use thiserror::Error;

use crate::message::Target;
use crate::Quorums;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RbKey {
    pub index: u64,
    pub broadcaster: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RbMessage {
    Init(Arc<Block>),
    Echo(Digest),
    Ready(Digest),
    Fetch(Digest),
    Payload(Arc<Block>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RbPhase {
    Init,
    Echoed,
    Ready,
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RbError {
    #[error("already broadcast for {0:?}")]
    Duplicate(RbKey),
    #[error("{me} cannot broadcast in {key:?}")]
    NotBroadcaster { me: NodeId, key: RbKey },
    #[error("block is not a valid proposal for {0:?}")]
    InvalidBlock(RbKey),
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RbOutput {
    pub send: Vec<(Target, RbMessage)>,
    pub delivered: Option<Arc<Block>>,
}

/// Per-instance counters of misbehaviour observed.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RbFaults {
    pub equivocations: u32,
    pub invalid_inits: u32,
    pub spoofed_inits: u32,
    pub unsolicited_payloads: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RbInstance {
    key: RbKey,
    quorums: Quorums,
    phase: RbPhase,
    broadcast_done: bool,
    /// Digest of the first valid INIT received.
    payload_digest: Option<Digest>,
    payloads: BTreeMap<Digest, Arc<Block>>,
    echo_set: BTreeMap<NodeId, Digest>,
    ready_set: BTreeMap<NodeId, Digest>,
    echo_counts: BTreeMap<Digest, usize>,
    ready_counts: BTreeMap<Digest, usize>,
    ready_sent: Option<Digest>,
    fetch_sent: bool,
    delivered: Option<Digest>,
    faults: RbFaults,
}

/// A proposal is acceptable in `key` iff it is unsealed and tagged with the
/// broadcaster's id. Transaction order is enforced by the `Block` type.
pub fn valid_proposal(key: RbKey, block: &Block) -> bool {
    block.proposer() == key.broadcaster && !block.is_sealed() && block.parent_digest().is_none()
}

impl RbInstance {
    pub fn new(key: RbKey, quorums: Quorums) -> Self {
        Self {
            key,
            quorums,
            phase: RbPhase::Init,
            broadcast_done: false,
            payload_digest: None,
            payloads: BTreeMap::new(),
            echo_set: BTreeMap::new(),
            ready_set: BTreeMap::new(),
            echo_counts: BTreeMap::new(),
            ready_counts: BTreeMap::new(),
            ready_sent: None,
            fetch_sent: false,
            delivered: None,
            faults: RbFaults::default(),
        }
    }

    pub fn key(&self) -> RbKey {
        self.key
    }

    pub fn phase(&self) -> RbPhase {
        self.phase
    }

    pub fn payload_digest(&self) -> Option<Digest> {
        self.payload_digest
    }

    pub fn echo_set(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.echo_set.keys().copied()
    }

    pub fn ready_set(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ready_set.keys().copied()
    }

    pub fn delivered(&self) -> Option<&Arc<Block>> {
        self.delivered.and_then(|d| self.payloads.get(&d))
    }

    pub fn faults(&self) -> RbFaults {
        self.faults
    }

    /// Start the broadcast: one INIT to every node, the caller included.
    pub fn broadcast(
        &mut self,
        me: NodeId,
        block: Arc<Block>,
    ) -> Result<Vec<(NodeId, RbMessage)>, RbError> {
        if me != self.key.broadcaster {
            return Err(RbError::NotBroadcaster { me, key: self.key });
        }
        if self.broadcast_done {
            return Err(RbError::Duplicate(self.key));
        }
        if !valid_proposal(self.key, &block) {
            return Err(RbError::InvalidBlock(self.key));
        }
        self.broadcast_done = true;
        Ok((0..self.quorums.n)
            .map(|i| (NodeId::from(i), RbMessage::Init(block.clone())))
            .collect())
    }

    pub fn handle(&mut self, from: NodeId, msg: RbMessage) -> RbOutput {
        let mut out = RbOutput::default();
        match msg {
            RbMessage::Init(block) => self.on_init(from, block, &mut out),
            RbMessage::Echo(d) => {
                if self.echo_set.contains_key(&from) {
                    return out;
                }
                self.echo_set.insert(from, d);
                *self.echo_counts.entry(d).or_default() += 1;
            }
            RbMessage::Ready(d) => {
                if self.ready_set.contains_key(&from) {
                    return out;
                }
                self.ready_set.insert(from, d);
                *self.ready_counts.entry(d).or_default() += 1;
            }
            RbMessage::Fetch(d) => {
                if let Some(block) = self.payloads.get(&d) {
                    out.send
                        .push((Target::Node(from), RbMessage::Payload(block.clone())));
                }
                return out;
            }
            RbMessage::Payload(block) => {
                let d = block.proposal_digest();
                // Only a digest some correct node vouched for may be installed.
                let vouched = self.ready_counts.get(&d).copied().unwrap_or(0) >= self.quorums.weak();
                if !vouched || !valid_proposal(self.key, &block) {
                    self.faults.unsolicited_payloads += 1;
                    return out;
                }
                self.payloads.entry(d).or_insert(block);
            }
        }
        self.progress(&mut out);
        out
    }

    fn on_init(&mut self, from: NodeId, block: Arc<Block>, out: &mut RbOutput) {
        if from != self.key.broadcaster {
            self.faults.spoofed_inits += 1;
            return;
        }
        if !valid_proposal(self.key, &block) {
            self.faults.invalid_inits += 1;
            return;
        }
        let d = block.proposal_digest();
        match self.payload_digest {
            None => {
                self.payload_digest = Some(d);
                self.payloads.insert(d, block);
                if self.phase == RbPhase::Init {
                    self.phase = RbPhase::Echoed;
                }
                out.send.push((Target::All, RbMessage::Echo(d)));
            }
            Some(first) if first != d => self.faults.equivocations += 1,
            Some(_) => {}
        }
    }

    fn progress(&mut self, out: &mut RbOutput) {
        if self.ready_sent.is_none() {
            let by_echo = self
                .echo_counts
                .iter()
                .find(|(_, c)| **c >= self.quorums.echo())
                .map(|(d, _)| *d);
            let by_ready = self
                .ready_counts
                .iter()
                .find(|(_, c)| **c >= self.quorums.weak())
                .map(|(d, _)| *d);
            if let Some(d) = by_echo.or(by_ready) {
                self.ready_sent = Some(d);
                if self.phase < RbPhase::Ready {
                    self.phase = RbPhase::Ready;
                }
                out.send.push((Target::All, RbMessage::Ready(d)));
            }
        }
        if self.delivered.is_none() {
            let ready = self
                .ready_counts
                .iter()
                .find(|(_, c)| **c >= self.quorums.strong())
                .map(|(d, _)| *d);
            if let Some(d) = ready {
                if let Some(block) = self.payloads.get(&d) {
                    self.delivered = Some(d);
                    self.phase = RbPhase::Delivered;
                    out.delivered = Some(block.clone());
                } else if !self.fetch_sent {
                    self.fetch_sent = true;
                    out.send.push((Target::All, RbMessage::Fetch(d)));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use collachain_core::{AccountId, Transaction};

    fn block(proposer: u32, tag: u8) -> Arc<Block> {
        let tx = Transaction::unsigned(AccountId(1), None, 0, 0, 21, vec![tag]);
        Arc::new(Block::proposal(NodeId(proposer), vec![tx], 0).unwrap())
    }

    fn key() -> RbKey {
        RbKey {
            index: 1,
            broadcaster: NodeId(0),
        }
    }

    #[test]
    fn broadcast_emits_init_to_everyone_once() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        let msgs = rb.broadcast(NodeId(0), block(0, 1)).unwrap();
        assert_eq!(msgs.len(), 4);
        assert!(matches!(rb.broadcast(NodeId(0), block(0, 1)), Err(RbError::Duplicate(_))));
    }

    #[test]
    fn broadcast_rejects_wrong_proposer_or_caller() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        assert!(matches!(rb.broadcast(NodeId(0), block(2, 1)), Err(RbError::InvalidBlock(_))));
        assert!(matches!(rb.broadcast(NodeId(1), block(0, 1)), Err(RbError::NotBroadcaster { .. })));
    }

    #[test]
    fn duplicate_echo_is_ignored() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        let d = block(0, 1).proposal_digest();
        rb.handle(NodeId(2), RbMessage::Echo(d));
        let before: Vec<_> = rb.echo_set().collect();
        rb.handle(NodeId(2), RbMessage::Echo(d));
        rb.handle(NodeId(2), RbMessage::Echo(block(0, 2).proposal_digest()));
        assert_eq!(rb.echo_set().collect::<Vec<_>>(), before);
        assert_eq!(rb.echo_counts.get(&d), Some(&1));
    }

    #[test]
    fn thresholds_drive_ready_and_delivery() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        let b = block(0, 1);
        let d = b.proposal_digest();
        let out = rb.handle(NodeId(0), RbMessage::Init(b.clone()));
        assert_eq!(out.send, vec![(Target::All, RbMessage::Echo(d))]);
        assert_eq!(rb.phase(), RbPhase::Echoed);
        rb.handle(NodeId(0), RbMessage::Echo(d));
        assert!(rb.handle(NodeId(1), RbMessage::Echo(d)).send.is_empty());
        let out = rb.handle(NodeId(2), RbMessage::Echo(d));
        assert_eq!(out.send, vec![(Target::All, RbMessage::Ready(d))]);
        rb.handle(NodeId(0), RbMessage::Ready(d));
        assert!(rb.handle(NodeId(1), RbMessage::Ready(d)).delivered.is_none());
        let out = rb.handle(NodeId(3), RbMessage::Ready(d));
        assert_eq!(out.delivered, Some(b));
        assert_eq!(rb.phase(), RbPhase::Delivered);
        // Further READYs never deliver twice.
        assert!(rb.handle(NodeId(2), RbMessage::Ready(d)).delivered.is_none());
    }

    #[test]
    fn ready_amplification_after_f_plus_one() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        let d = block(0, 1).proposal_digest();
        assert!(rb.handle(NodeId(1), RbMessage::Ready(d)).send.is_empty());
        let out = rb.handle(NodeId(2), RbMessage::Ready(d));
        assert_eq!(out.send, vec![(Target::All, RbMessage::Ready(d))]);
    }

    #[test]
    fn equivocation_recorded_and_missing_payload_fetched() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        let (b1, b2) = (block(0, 1), block(0, 2));
        let d1 = b1.proposal_digest();
        rb.handle(NodeId(0), RbMessage::Init(b2.clone()));
        rb.handle(NodeId(0), RbMessage::Init(b1.clone()));
        assert_eq!(rb.faults().equivocations, 1);
        for i in 1..3 {
            rb.handle(NodeId(i), RbMessage::Ready(d1));
        }
        let out = rb.handle(NodeId(3), RbMessage::Ready(d1));
        assert!(out.delivered.is_none());
        assert!(out.send.contains(&(Target::All, RbMessage::Fetch(d1))));
        // A payload that nobody vouched for is refused.
        rb.handle(NodeId(3), RbMessage::Payload(block(0, 9)));
        assert_eq!(rb.faults().unsolicited_payloads, 1);
        let out = rb.handle(NodeId(2), RbMessage::Payload(b1.clone()));
        assert_eq!(out.delivered, Some(b1));
    }

    #[test]
    fn fetch_answered_only_with_known_payload() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        let b = block(0, 1);
        rb.handle(NodeId(0), RbMessage::Init(b.clone()));
        let out = rb.handle(NodeId(3), RbMessage::Fetch(b.proposal_digest()));
        assert_eq!(out.send, vec![(Target::Node(NodeId(3)), RbMessage::Payload(b))]);
        assert!(rb.handle(NodeId(3), RbMessage::Fetch(Digest([1; 32]))).send.is_empty());
    }

    #[test]
    fn init_from_non_broadcaster_is_ignored() {
        let mut rb = RbInstance::new(key(), Quorums::new(4, 1));
        let out = rb.handle(NodeId(2), RbMessage::Init(block(0, 1)));
        assert!(out.send.is_empty());
        assert_eq!(rb.faults().spoofed_inits, 1);
    }
}
