// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Bounded exhaustive exploration of delivery orders for one consensus index
//! at n = 4, f = 1.
//!
//! Correct node 0 proposes a block, nodes 1 and 2 propose nothing, and node 3
//! is byzantine: it sends one block to nodes 0 and 1 and a conflicting one to
//! node 2, then stays silent. Every interleaving of the first `depth`
//! deliveries (timer expiries included, since under asynchrony a timer may
//! fire at any point) is explored depth-first; states reached twice are
//! pruned by a hash of the node states and the pending multiset. Each leaf is
//! completed with FIFO delivery, firing timers only when nothing else is in
//! flight, and must end with every correct node holding the same superblock.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use collachain_consensus::{expand_targets, ConsensusMessage, ConsensusNode, NodeConfig, NodeStep, Quorums, RbMessage, TimerId};
use collachain_core::{AccountId, Block, Digest, NodeId, Transaction};
use serde::Serialize;

use crate::adversary::twin_block;

const N: usize = 4;
const CORRECT: usize = 3;
const BYZANTINE: NodeId = NodeId(3);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Deliveries explored exhaustively before completing a branch.
    pub depth: usize,
    /// Step cap for the fair completion of a branch.
    pub completion_limit: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            depth: 10,
            completion_limit: 50_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExploreReport {
    pub depth: usize,
    /// Distinct states expanded.
    pub states: u64,
    /// Branches completed to termination.
    pub leaves: u64,
    /// Transitions leading to an already visited state.
    pub pruned: u64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Pending {
    Msg { from: NodeId, to: NodeId, msg: ConsensusMessage },
    Timer { node: NodeId, timer: TimerId },
}

#[derive(Clone)]
struct World {
    nodes: Vec<ConsensusNode>,
    pending: Vec<Pending>,
    decided: [Option<Digest>; CORRECT],
}

impl World {
    fn key(&self) -> u64 {
        let mut pend: Vec<u64> = self.pending.iter().map(hash_of).collect();
        pend.sort_unstable();
        let mut h = DefaultHasher::new();
        self.nodes.hash(&mut h);
        pend.hash(&mut h);
        self.decided.hash(&mut h);
        h.finish()
    }

    fn absorb(&mut self, me: NodeId, step: NodeStep) -> Result<(), String> {
        for (to, msg) in expand_targets(N, step.send) {
            if to != BYZANTINE {
                self.pending.push(Pending::Msg { from: me, to, msg });
            }
        }
        for (timer, _) in step.timers {
            self.pending.push(Pending::Timer { node: me, timer });
        }
        for sb in step.committed.into_iter().filter(|s| s.index() == 0) {
            let d = sb.digest();
            self.decided[me.index()] = Some(d);
            if self.decided.iter().flatten().any(|o| *o != d) {
                return Err(format!("correct nodes decided different superblocks ({} at {me})", d.to_hex()));
            }
        }
        Ok(())
    }

    fn fire(&mut self, i: usize) -> Result<(), String> {
        match self.pending.swap_remove(i) {
            Pending::Msg { from, to, msg } => {
                let step = self.nodes[to.index()].handle(from, msg);
                self.absorb(to, step)
            }
            Pending::Timer { node, timer } => {
                let step = self.nodes[node.index()].on_timer(timer);
                self.absorb(node, step)
            }
        }
    }

    fn done(&self) -> bool {
        self.decided.iter().all(Option::is_some)
    }
}

fn hash_of<T: Hash>(v: &T) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

fn block(proposer: u32) -> Arc<Block> {
    let tx = Transaction::unsigned(AccountId(proposer as u64), None, 0, 0, 21, vec![proposer as u8]);
    Arc::new(Block::proposal(NodeId(proposer), vec![tx], 1).expect("single transaction"))
}

fn initial() -> Result<World, String> {
    let q = Quorums::new(N, 1);
    let cfg = NodeConfig {
        timeout_base: 1,
        ..NodeConfig::default()
    };
    let mut w = World {
        nodes: (0..CORRECT).map(|i| ConsensusNode::new(NodeId::from(i), q, cfg)).collect(),
        pending: Vec::new(),
        decided: [None; CORRECT],
    };
    let step = w.nodes[0].submit(block(0));
    w.absorb(NodeId(0), step)?;
    let honest = block(BYZANTINE.0);
    let twin = twin_block(&honest);
    for (to, b) in [(0u32, &honest), (1, &honest), (2, &twin)] {
        w.pending.push(Pending::Msg {
            from: BYZANTINE,
            to: NodeId(to),
            msg: ConsensusMessage::Rb {
                index: 0,
                broadcaster: BYZANTINE,
                body: RbMessage::Init(b.clone()),
            },
        });
    }
    Ok(w)
}

/// Deliver in FIFO order; timers fire only when no message is in flight.
fn complete(mut w: World, limit: usize) -> Result<(), String> {
    for _ in 0..limit {
        if w.done() {
            return Ok(());
        }
        let next = match w.pending.iter().position(|p| matches!(p, Pending::Msg { .. })) {
            Some(i) => i,
            None => match w
                .pending
                .iter()
                .enumerate()
                .min_by_key(|(_, p)| match p {
                    Pending::Timer { timer, .. } => timer.round,
                    Pending::Msg { .. } => u64::MAX,
                })
                .map(|(i, _)| i)
            {
                Some(i) => i,
                None => return Err("no events left before every correct node decided".into()),
            },
        };
        // `fire` swap-removes, so preserve FIFO order explicitly.
        let ev = w.pending.remove(next);
        w.pending.push(ev);
        let last = w.pending.len() - 1;
        w.fire(last)?;
    }
    Err(format!("no decision within {limit} completion steps"))
}

pub fn explore(cfg: ExploreConfig) -> ExploreReport {
    let mut report = ExploreReport {
        depth: cfg.depth,
        ..ExploreReport::default()
    };
    let mut visited = HashSet::new();
    match initial() {
        Ok(w) => dfs(w, 0, &cfg, &mut visited, &mut report),
        Err(e) => report.violations.push(e),
    }
    report
}

fn dfs(w: World, depth: usize, cfg: &ExploreConfig, visited: &mut HashSet<u64>, report: &mut ExploreReport) {
    if !report.violations.is_empty() {
        return;
    }
    if !visited.insert(w.key()) {
        report.pruned += 1;
        return;
    }
    report.states += 1;
    if depth == cfg.depth || w.pending.is_empty() || w.done() {
        report.leaves += 1;
        if let Err(e) = complete(w, cfg.completion_limit) {
            report.violations.push(format!("at depth {depth}: {e}"));
        }
        return;
    }
    let mut tried = HashSet::new();
    for i in 0..w.pending.len() {
        if !tried.insert(hash_of(&w.pending[i])) {
            continue;
        }
        let mut next = w.clone();
        if let Err(e) = next.fire(i) {
            report.violations.push(format!("at depth {}: {e}", depth + 1));
            return;
        }
        dfs(next, depth + 1, cfg, visited, report);
    }
}
