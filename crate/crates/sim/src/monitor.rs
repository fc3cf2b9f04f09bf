// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Continuous safety checks over the correct nodes of one chain.
//!
//! * agreement: every correct node emits the same superblock per index,
//! * prefix: the sealed block sequences of correct nodes never diverge,
//! * validity: a shadow replica replays the first persisted copy of each
//!   index; every persisted transaction must authenticate, pass the lazy rule
//!   at its execution point and reproduce the recorded outcome, and every
//!   later node must reach the same state digest.

use std::fmt;
use std::sync::Arc;

use collachain_core::validation::lazy_check;
use collachain_core::{execute, ChainConfig, Digest, NodeId, SignatureScheme, Superblock, WorldState};
use collachain_node::{CommitReport, Contracts, LogRecord};
use serde::Serialize;

use crate::trace::TraceEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Agreement,
    Prefix,
    Validity,
    LightClient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub chain: u32,
    pub node: NodeId,
    pub index: u64,
    pub at: u64,
    pub detail: String,
    /// Events of the violating chain touching the violating index, up to the
    /// violation.
    pub trace: Vec<TraceEntry>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} violation on chain {} at {} (node {}, index {}, t={}us): {}",
            self.kind, self.chain, self.node, self.node, self.index, self.at, self.detail
        )
    }
}

impl std::error::Error for Violation {}

pub struct ChainMonitor {
    chain: u32,
    cfg: ChainConfig,
    scheme: Arc<dyn SignatureScheme>,
    superblocks: Vec<Digest>,
    blocks: Vec<Digest>,
    node_blocks: Vec<usize>,
    shadow: WorldState,
    shadow_contracts: Contracts,
    /// State digest after each index.
    heights: Vec<Digest>,
}

impl ChainMonitor {
    pub fn new(
        chain: u32,
        n: usize,
        cfg: ChainConfig,
        scheme: Arc<dyn SignatureScheme>,
        genesis: WorldState,
        contracts: Contracts,
    ) -> Self {
        Self {
            chain,
            cfg,
            scheme,
            superblocks: Vec::new(),
            blocks: Vec::new(),
            node_blocks: vec![0; n],
            shadow: genesis,
            shadow_contracts: contracts,
            heights: Vec::new(),
        }
    }

    fn violation(&self, kind: ViolationKind, node: NodeId, index: u64, detail: String) -> Violation {
        Violation {
            kind,
            chain: self.chain,
            node,
            index,
            at: 0,
            detail,
            trace: Vec::new(),
        }
    }

    pub fn decided(&self) -> &[Digest] {
        &self.superblocks
    }

    pub fn state_digest_at(&self, height: u64) -> Option<Digest> {
        height.checked_sub(1).and_then(|h| self.heights.get(h as usize)).copied()
    }

    pub fn on_decide(&mut self, node: NodeId, sb: &Superblock) -> Result<(), Violation> {
        let i = sb.index() as usize;
        let d = sb.digest();
        match self.superblocks.get(i) {
            Some(known) if *known != d => Err(self.violation(
                ViolationKind::Agreement,
                node,
                sb.index(),
                format!("superblock {} differs from {}", d.to_hex(), known.to_hex()),
            )),
            Some(_) => Ok(()),
            None if i == self.superblocks.len() => {
                self.superblocks.push(d);
                Ok(())
            }
            None => Err(self.violation(ViolationKind::Agreement, node, sb.index(), "index released out of order".into())),
        }
    }

    /// Check a node's commit of one index. `records` are the log records it
    /// appended for it and `state` its state afterwards.
    pub fn on_commit(
        &mut self,
        node: NodeId,
        report: &CommitReport,
        records: &[LogRecord],
        state: &WorldState,
    ) -> Result<(), Violation> {
        for b in &report.blocks {
            let pos = self.node_blocks[node.index()];
            match self.blocks.get(pos) {
                Some(d) if *d != b.digest => {
                    return Err(self.violation(
                        ViolationKind::Prefix,
                        node,
                        report.index,
                        format!("block {pos} is {} but {} elsewhere", b.digest.to_hex(), d.to_hex()),
                    ))
                }
                Some(_) => {}
                None => self.blocks.push(b.digest),
            }
            self.node_blocks[node.index()] += 1;
        }
        let h = report.index as usize;
        if h == self.heights.len() {
            self.replay(node, report.index, records)?;
        }
        match self.heights.get(h) {
            Some(d) if *d == state.state_digest() => Ok(()),
            Some(d) => Err(self.violation(
                ViolationKind::Validity,
                node,
                report.index,
                format!("state {} differs from replica {}", state.state_digest().to_hex(), d.to_hex()),
            )),
            None => Err(self.violation(ViolationKind::Validity, node, report.index, "commit skipped an index".into())),
        }
    }

    fn replay(&mut self, node: NodeId, index: u64, records: &[LogRecord]) -> Result<(), Violation> {
        for rec in records {
            for block in &rec.blocks {
                for (tx, outcome) in &block.txs {
                    let chain = self.chain;
                    let fail = |what: &str| Violation {
                        kind: ViolationKind::Validity,
                        chain,
                        node,
                        index,
                        at: 0,
                        detail: format!("persisted transaction {:?}/{} {what}", tx.sender, tx.nonce),
                        trace: Vec::new(),
                    };
                    if !tx.verify(self.scheme.as_ref()) {
                        return Err(fail("does not authenticate"));
                    }
                    if let Some(r) = lazy_check(tx, &self.shadow, &self.cfg).reason {
                        return Err(fail(&format!("fails the lazy rule ({r})")));
                    }
                    let got = execute(&mut self.shadow, tx, &self.cfg, &mut self.shadow_contracts)
                        .map_err(|e| fail(&e.to_string()))?;
                    if got != *outcome {
                        return Err(fail("has a different outcome on the replica"));
                    }
                }
            }
        }
        self.shadow.set_height(index + 1);
        self.heights.push(self.shadow.state_digest());
        Ok(())
    }
}
