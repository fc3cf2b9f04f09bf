// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! The consensus node: a queue of own proposals and one reduction instance
//! per index, with superblocks released on the commit channel in index order.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use collachain_core::{Block, NodeId, Superblock};

use crate::message::{ConsensusMessage, Outbound};
use crate::superblock::{InstanceStep, SuperblockInstance};
use crate::Quorums;

/// Identifies one binary agreement round timer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId {
    pub index: u64,
    pub slot: NodeId,
    pub round: u64,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct NodeStep {
    pub send: Vec<Outbound>,
    pub timers: Vec<(TimerId, u64)>,
    /// Superblocks for the commit channel, in index order without gaps.
    pub committed: Vec<Superblock>,
}

impl NodeStep {
    fn absorb(&mut self, step: InstanceStep) {
        self.send.extend(step.send);
        self.timers.extend(step.timers);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeConfig {
    /// Base binary agreement timeout in caller time units.
    pub timeout_base: u64,
    /// Messages for indices beyond `next_commit + lookahead` are dropped.
    pub lookahead: u64,
    /// Instances older than `next_commit - retain` are discarded.
    pub retain: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            timeout_base: 50,
            lookahead: 256,
            retain: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConsensusNode {
    me: NodeId,
    quorums: Quorums,
    cfg: NodeConfig,
    queue: VecDeque<Arc<Block>>,
    instances: BTreeMap<u64, SuperblockInstance>,
    /// Decided but not yet released because an earlier index is pending.
    decided: BTreeMap<u64, Superblock>,
    next_commit: u64,
    dropped: u64,
}

impl ConsensusNode {
    pub fn new(me: NodeId, quorums: Quorums, cfg: NodeConfig) -> Self {
        Self {
            me,
            quorums,
            cfg,
            queue: VecDeque::new(),
            instances: BTreeMap::new(),
            decided: BTreeMap::new(),
            next_commit: 0,
            dropped: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.me
    }

    pub fn quorums(&self) -> Quorums {
        self.quorums
    }

    /// Index of the next superblock to be released.
    pub fn next_commit(&self) -> u64 {
        self.next_commit
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn queued(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.queue.iter()
    }

    /// Messages discarded for falling outside the index window.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn instance(&self, index: u64) -> Option<&SuperblockInstance> {
        self.instances.get(&index)
    }

    /// Queue an own proposal. It is broadcast once it reaches the head and
    /// stays queued until a superblock includes it.
    pub fn submit(&mut self, block: Arc<Block>) -> NodeStep {
        self.queue.push_back(block);
        let mut step = NodeStep::default();
        self.try_propose(&mut step);
        step
    }

    pub fn handle(&mut self, from: NodeId, msg: ConsensusMessage) -> NodeStep {
        let mut step = NodeStep::default();
        let index = msg.index();
        if from.index() >= self.quorums.n || !self.in_window(index) {
            self.dropped += 1;
            return step;
        }
        let inst = self.instance_mut(index);
        let s = inst.handle(from, msg);
        self.after(index, s, &mut step);
        step
    }

    pub fn on_timer(&mut self, timer: TimerId) -> NodeStep {
        let mut step = NodeStep::default();
        if let Some(inst) = self.instances.get_mut(&timer.index) {
            let s = inst.on_timeout(timer.slot, timer.round);
            self.after(timer.index, s, &mut step);
        }
        step
    }

    fn in_window(&self, index: u64) -> bool {
        index + self.cfg.retain >= self.next_commit && index <= self.next_commit + self.cfg.lookahead
    }

    fn instance_mut(&mut self, index: u64) -> &mut SuperblockInstance {
        let (me, q, t) = (self.me, self.quorums, self.cfg.timeout_base);
        self.instances
            .entry(index)
            .or_insert_with(|| SuperblockInstance::new(index, me, q, t))
    }

    fn after(&mut self, index: u64, mut s: InstanceStep, step: &mut NodeStep) {
        if let Some(sb) = s.superblock.take() {
            self.decided.insert(index, sb);
        }
        step.absorb(s);
        let mut released = false;
        while let Some(sb) = self.decided.remove(&self.next_commit) {
            if let Some(head) = self.queue.front() {
                let own = self.instances.get(&self.next_commit).and_then(|i| i.own_block());
                if own.is_some_and(|b| b == head) && sb.blocks().iter().any(|b| b == head) {
                    self.queue.pop_front();
                }
            }
            step.committed.push(sb);
            self.next_commit += 1;
            released = true;
        }
        if released {
            let floor = self.next_commit.saturating_sub(self.cfg.retain);
            self.instances = self.instances.split_off(&floor);
        }
        self.try_propose(step);
    }

    fn try_propose(&mut self, step: &mut NodeStep) {
        let Some(head) = self.queue.front().cloned() else {
            return;
        };
        let inst = self.instance_mut(self.next_commit);
        if !inst.can_propose() {
            return;
        }
        let s = inst.propose(head).expect("instance accepts a proposal");
        let index = self.next_commit;
        self.after(index, s, step);
    }
}
