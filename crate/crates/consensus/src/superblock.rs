// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! One index of the superblock reduction.
//!
//! Each slot `i` pairs the reliable broadcast of proposer `i` with a binary
//! agreement on whether its block is included. Delivery of slot `i` proposes
//! `true` in slot `i`. After the first `true` decision, every slot not yet
//! proposed gets `false`, so all slots eventually decide. The superblock is
//! the delivered blocks of the `true` slots in slot order, and it is emitted
//! once every slot has decided and each `true` slot's block is delivered.

use std::sync::Arc;

use collachain_core::{Block, NodeId, Superblock};

use crate::binary::{BcMessage, BcOutput, BinaryAgreement};
use crate::message::{ConsensusMessage, Outbound, Target};
use crate::node::TimerId;
use crate::rbc::{RbError, RbInstance, RbKey, RbOutput};
use crate::Quorums;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct InstanceStep {
    pub send: Vec<Outbound>,
    /// Timers to arm as `(timer, delay)`.
    pub timers: Vec<(TimerId, u64)>,
    pub superblock: Option<Superblock>,
}

impl InstanceStep {
    pub fn absorb(&mut self, other: InstanceStep) {
        self.send.extend(other.send);
        self.timers.extend(other.timers);
        if other.superblock.is_some() {
            debug_assert!(self.superblock.is_none());
            self.superblock = other.superblock;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SuperblockInstance {
    index: u64,
    me: NodeId,
    quorums: Quorums,
    rb: Vec<RbInstance>,
    bc: Vec<BinaryAgreement>,
    blocks: Vec<Option<Arc<Block>>>,
    dec_blocks: Vec<Option<bool>>,
    dec_count: usize,
    false_proposed: bool,
    own: Option<Arc<Block>>,
    emitted: bool,
}

impl SuperblockInstance {
    pub fn new(index: u64, me: NodeId, quorums: Quorums, timeout_base: u64) -> Self {
        let n = quorums.n;
        Self {
            index,
            me,
            quorums,
            rb: (0..n)
                .map(|i| {
                    RbInstance::new(
                        RbKey {
                            index,
                            broadcaster: NodeId::from(i),
                        },
                        quorums,
                    )
                })
                .collect(),
            bc: (0..n)
                .map(|_| BinaryAgreement::new(quorums, me, timeout_base))
                .collect(),
            blocks: vec![None; n],
            dec_blocks: vec![None; n],
            dec_count: 0,
            false_proposed: false,
            own: None,
            emitted: false,
        }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn own_block(&self) -> Option<&Arc<Block>> {
        self.own.as_ref()
    }

    /// Whether this node may still broadcast a block here: nothing sent yet
    /// and its own slot has not been voted on.
    pub fn can_propose(&self) -> bool {
        self.own.is_none() && self.bc[self.me.index()].proposal().is_none()
    }

    pub fn dec_count(&self) -> usize {
        self.dec_count
    }

    pub fn decisions(&self) -> &[Option<bool>] {
        &self.dec_blocks
    }

    pub fn delivered(&self, slot: NodeId) -> Option<&Arc<Block>> {
        self.blocks.get(slot.index()).and_then(Option::as_ref)
    }

    pub fn is_emitted(&self) -> bool {
        self.emitted
    }

    pub fn rb(&self, slot: NodeId) -> &RbInstance {
        &self.rb[slot.index()]
    }

    pub fn bc(&self, slot: NodeId) -> &BinaryAgreement {
        &self.bc[slot.index()]
    }

    /// Reliably broadcast this node's block for the index.
    pub fn propose(&mut self, block: Arc<Block>) -> Result<InstanceStep, RbError> {
        let me = self.me;
        let key = self.rb[me.index()].key();
        if !self.can_propose() {
            return Err(RbError::Duplicate(key));
        }
        let msgs = self.rb[me.index()].broadcast(me, block.clone())?;
        self.own = Some(block);
        let mut step = InstanceStep::default();
        for (to, body) in msgs {
            step.send.push(Outbound::to(
                to,
                ConsensusMessage::Rb {
                    index: self.index,
                    broadcaster: me,
                    body,
                },
            ));
        }
        Ok(step)
    }

    pub fn handle(&mut self, from: NodeId, msg: ConsensusMessage) -> InstanceStep {
        let mut step = InstanceStep::default();
        match msg {
            ConsensusMessage::Rb {
                index,
                broadcaster,
                body,
            } if index == self.index && broadcaster.index() < self.quorums.n => {
                let out = self.rb[broadcaster.index()].handle(from, body);
                self.on_rb(broadcaster, out, &mut step);
            }
            ConsensusMessage::Bc { index, slot, body } if index == self.index && slot.index() < self.quorums.n => {
                let out = self.bc[slot.index()].handle(from, body);
                self.on_bc(slot, out, &mut step);
            }
            _ => return step,
        }
        self.try_emit(&mut step);
        step
    }

    pub fn on_timeout(&mut self, slot: NodeId, round: u64) -> InstanceStep {
        let mut step = InstanceStep::default();
        if slot.index() >= self.quorums.n {
            return step;
        }
        let out = self.bc[slot.index()].on_timeout(round);
        self.on_bc(slot, out, &mut step);
        self.try_emit(&mut step);
        step
    }

    fn on_rb(&mut self, slot: NodeId, out: RbOutput, step: &mut InstanceStep) {
        for (to, body) in out.send {
            let msg = ConsensusMessage::Rb {
                index: self.index,
                broadcaster: slot,
                body,
            };
            step.send.push(Outbound { to, msg });
        }
        if let Some(block) = out.delivered {
            self.blocks[slot.index()] = Some(block);
            if self.bc[slot.index()].proposal().is_none() {
                let out = self.bc[slot.index()]
                    .propose(true)
                    .expect("no prior proposal");
                self.on_bc(slot, out, step);
            }
        }
    }

    fn on_bc(&mut self, slot: NodeId, out: BcOutput, step: &mut InstanceStep) {
        let i = slot.index();
        for body in out.broadcast {
            step.send.push(Outbound::all(self.bc_msg(slot, body)));
        }
        for (round, delay) in out.timers {
            step.timers.push((
                TimerId {
                    index: self.index,
                    slot,
                    round,
                },
                delay,
            ));
        }
        if let Some(v) = out.decided {
            debug_assert!(self.dec_blocks[i].is_none());
            self.dec_blocks[i] = Some(v);
            self.dec_count += 1;
            if v && !self.false_proposed {
                self.false_proposed = true;
                for j in 0..self.quorums.n {
                    if self.bc[j].proposal().is_none() {
                        let out = self.bc[j].propose(false).expect("no prior proposal");
                        self.on_bc(NodeId::from(j), out, step);
                    }
                }
            }
        }
    }

    fn bc_msg(&self, slot: NodeId, body: BcMessage) -> ConsensusMessage {
        ConsensusMessage::Bc {
            index: self.index,
            slot,
            body,
        }
    }

    fn try_emit(&mut self, step: &mut InstanceStep) {
        if self.emitted || self.dec_count < self.quorums.n {
            return;
        }
        let mut blocks = Vec::new();
        for (dec, block) in self.dec_blocks.iter().zip(&self.blocks) {
            if *dec == Some(true) {
                match block {
                    Some(b) => blocks.push(b.clone()),
                    None => return,
                }
            }
        }
        self.emitted = true;
        step.superblock = Some(Superblock::new(self.index, blocks).expect("slot order is ascending"));
    }
}

/// Route a step's messages: `Target::All` is expanded to every node.
pub fn expand_targets(n: usize, send: Vec<Outbound>) -> Vec<(NodeId, ConsensusMessage)> {
    let mut out = Vec::with_capacity(send.len() * n);
    for o in send {
        match o.to {
            Target::All => out.extend((0..n).map(|i| (NodeId::from(i), o.msg.clone()))),
            Target::Node(to) => out.push((to, o.msg)),
        }
    }
    out
}
