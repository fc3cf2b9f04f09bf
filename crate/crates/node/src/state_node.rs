// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! The state node: pool, proposal building, and the commit pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::sync::Arc;

use collachain_core::{
    execute, AccountId, Block, ChainConfig, Digest, NodeId, RejectReason, SignatureScheme,
    Superblock, Transaction, ValidationCounters, Validator, WorldState,
};
use thiserror::Error;

use crate::contracts::Contracts;
use crate::light_client::{ReadKey, ReadResponse, ReadService, ReadValue};
use crate::log::{BlockRecord, CommitMode, LogRecord, PersistedLog};
use crate::membership::CommitteeSchedule;
use crate::pool::{DropReason, TxPool};

#[derive(Debug, Error)]
pub enum CommitError {
    #[error("superblock {got} out of order, expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("log write failed: {0}")]
    Io(#[from] io::Error),
    #[error("log replay diverged: {0}")]
    Replay(&'static str),
}

/// Per-block commit accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockCommit {
    pub slot: NodeId,
    pub digest: Digest,
    pub executed: usize,
    pub failed: usize,
    /// Discarded by lazy validation, by reason.
    pub rejected: BTreeMap<RejectReason, usize>,
    /// Discarded because the signature did not authenticate the sender.
    pub forged: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommitReport {
    pub index: u64,
    pub blocks: Vec<BlockCommit>,
    /// Digests of transactions that executed (successfully or not).
    pub committed: Vec<Digest>,
}

impl CommitReport {
    pub fn executed(&self) -> usize {
        self.blocks.iter().map(|b| b.executed + b.failed).sum()
    }
}

pub struct StateNode {
    id: NodeId,
    cfg: ChainConfig,
    validator: Validator,
    state: WorldState,
    pool: TxPool,
    log: PersistedLog,
    contracts: Contracts,
    tip: Option<(Digest, u64)>,
    /// Own proposals not yet committed, with their transaction counts.
    proposals: BTreeMap<Digest, usize>,
    /// Blocks of a partially persisted index, found during recovery.
    resume: Option<(u64, usize)>,
    schedule: Option<CommitteeSchedule>,
}

impl StateNode {
    pub fn new(
        id: NodeId,
        cfg: ChainConfig,
        scheme: Arc<dyn SignatureScheme>,
        genesis: WorldState,
        log: PersistedLog,
    ) -> Self {
        Self {
            id,
            pool: TxPool::new(cfg.pool_capacity),
            validator: Validator::new(cfg.clone(), scheme),
            cfg,
            state: genesis,
            log,
            contracts: Contracts::default(),
            tip: None,
            proposals: BTreeMap::new(),
            resume: None,
            schedule: None,
        }
    }

    pub fn in_memory(id: NodeId, cfg: ChainConfig, scheme: Arc<dyn SignatureScheme>, genesis: WorldState, mode: CommitMode) -> Self {
        Self::new(id, cfg, scheme, genesis, PersistedLog::in_memory(mode))
    }

    pub fn with_contracts(mut self, contracts: Contracts) -> Self {
        self.contracts = contracts;
        self
    }

    /// Track committee changes selected by the membership contract.
    pub fn with_schedule(mut self, schedule: CommitteeSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    /// Rebuild a node from genesis by replaying `log`. The built-in contracts
    /// must be in their genesis configuration too. A trailing index with
    /// fewer persisted blocks than its superblock holds is resumed by the
    /// next `commit_superblock` for that index.
    pub fn recover(
        id: NodeId,
        cfg: ChainConfig,
        scheme: Arc<dyn SignatureScheme>,
        genesis: WorldState,
        contracts: Contracts,
        log: PersistedLog,
    ) -> Result<Self, CommitError> {
        let records: Vec<LogRecord> = log.records().to_vec();
        let mut node = Self::new(id, cfg, scheme, genesis, log).with_contracts(contracts);
        let mut done_in_index = 0usize;
        for rec in &records {
            if rec.index != node.state.height() {
                return Err(CommitError::Replay("record index does not follow height"));
            }
            for b in &rec.blocks {
                for (tx, outcome) in &b.txs {
                    let got = execute(&mut node.state, tx, &node.cfg, &mut node.contracts)
                        .map_err(|_| CommitError::Replay("persisted transaction fails lazy check"))?;
                    if got != *outcome {
                        return Err(CommitError::Replay("execution outcome differs"));
                    }
                }
                node.tip = Some((b.digest, b.timestamp));
            }
            done_in_index += rec.blocks.len();
            if done_in_index >= rec.superblock_len as usize {
                node.finish_index(rec.index);
                done_in_index = 0;
            }
        }
        if done_in_index > 0 {
            node.resume = Some((node.state.height(), done_in_index));
        }
        Ok(node)
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn height(&self) -> u64 {
        self.state.height()
    }

    pub fn pool(&self) -> &TxPool {
        &self.pool
    }

    pub fn log(&self) -> &PersistedLog {
        &self.log
    }

    pub fn contracts(&self) -> &Contracts {
        &self.contracts
    }

    pub fn schedule(&self) -> Option<&CommitteeSchedule> {
        self.schedule.as_ref()
    }

    pub fn counters(&self) -> ValidationCounters {
        self.validator.counters()
    }

    pub fn tip(&self) -> Option<(Digest, u64)> {
        self.tip
    }

    pub fn mode(&self) -> CommitMode {
        self.log.mode()
    }

    /// Eager-validate and pool a client transaction. Nothing is forwarded to
    /// other state nodes.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<(), DropReason> {
        let verdict = self.validator.eager_validate(&tx, &self.state);
        if let Some(reason) = verdict.reason {
            let r = DropReason::Rejected(reason);
            self.pool.record_drop(r);
            return Err(r);
        }
        self.pool.insert(tx)
    }

    /// A block of exactly `proposal_threshold` transactions, once that many
    /// are pooled.
    pub fn build_proposal(&mut self, timestamp: u64) -> Option<Block> {
        if self.pool.len() < self.cfg.proposal_threshold {
            return None;
        }
        Some(self.propose(self.cfg.proposal_threshold, timestamp))
    }

    /// Like `build_proposal` but proposes whatever is pooled (for low-rate
    /// workloads with a flush timer).
    pub fn flush_proposal(&mut self, timestamp: u64) -> Option<Block> {
        if self.pool.is_empty() {
            return None;
        }
        Some(self.propose(self.cfg.proposal_threshold, timestamp))
    }

    fn propose(&mut self, max: usize, timestamp: u64) -> Block {
        let txs = self.pool.take(max);
        let count = txs.len();
        let block = Block::proposal(self.id, txs, timestamp).expect("pool output is sorted");
        *self.proposals.entry(block.proposal_digest()).or_default() += count;
        block
    }

    pub fn commit_superblock(&mut self, sb: &Superblock) -> Result<CommitReport, CommitError> {
        self.commit_inner(sb, None)
    }

    /// Test hook: stop as if the process died after `blocks` blocks of `sb`
    /// were executed (and, in per-block mode, persisted).
    #[doc(hidden)]
    pub fn commit_superblock_crashing(&mut self, sb: &Superblock, blocks: usize) -> Result<CommitReport, CommitError> {
        self.commit_inner(sb, Some(blocks))
    }

    fn commit_inner(&mut self, sb: &Superblock, crash_after: Option<usize>) -> Result<CommitReport, CommitError> {
        let expected = self.state.height();
        if sb.index() != expected {
            return Err(CommitError::OutOfOrder {
                expected,
                got: sb.index(),
            });
        }
        let skip = match self.resume.take() {
            Some((index, k)) if index == sb.index() => k,
            _ => 0,
        };
        let sb_len = sb.len() as u32;
        let mut report = CommitReport {
            index: sb.index(),
            ..CommitReport::default()
        };
        let mut whole = Vec::new();
        let mut touched = BTreeSet::new();
        for (pos, block) in sb.blocks().iter().enumerate() {
            if crash_after == Some(pos) {
                return Ok(report);
            }
            if pos < skip {
                continue;
            }
            let (record, commit) = self.commit_block(block, &mut report.committed);
            touched.extend(block.transactions().iter().map(|t| t.sender));
            report.blocks.push(commit);
            match self.log.mode() {
                CommitMode::PerBlock => self.log.append(LogRecord {
                    index: sb.index(),
                    superblock_len: sb_len,
                    blocks: vec![record],
                })?,
                CommitMode::WholeSuperblock => whole.push(record),
            }
        }
        if crash_after.is_some_and(|c| c >= sb.blocks().len()) {
            return Ok(report);
        }
        if self.log.mode() == CommitMode::WholeSuperblock || sb.is_empty() {
            self.log.append(LogRecord {
                index: sb.index(),
                superblock_len: sb_len,
                blocks: whole,
            })?;
        }
        for block in sb.blocks() {
            if let Some(count) = self.proposals.remove(&block.proposal_digest()) {
                self.pool.settle(count);
            }
        }
        for sender in touched {
            self.pool.prune(sender, self.state.account(sender).nonce);
        }
        self.finish_index(sb.index());
        Ok(report)
    }

    fn commit_block(&mut self, block: &Block, committed: &mut Vec<Digest>) -> (BlockRecord, BlockCommit) {
        let parent_ts = self.tip.map_or(0, |(_, ts)| ts);
        let timestamp = block.timestamp().max(parent_ts);
        let sealed = block.seal(self.tip, timestamp).expect("timestamp clamped to parent");
        let digest = sealed.digest().expect("sealed");
        let mut commit = BlockCommit {
            slot: block.proposer(),
            digest,
            ..BlockCommit::default()
        };
        let mut txs = Vec::new();
        for tx in block.transactions() {
            let verdict = self.validator.lazy_validate(tx, &self.state);
            if let Some(reason) = verdict.reason {
                *commit.rejected.entry(reason).or_default() += 1;
                continue;
            }
            // Sender authentication happens on entry to execution; a forged
            // transaction has no sender and leaves no trace.
            if !tx.verify(self.validator.scheme().as_ref()) {
                commit.forged += 1;
                continue;
            }
            let outcome = execute(&mut self.state, tx, &self.cfg, &mut self.contracts)
                .expect("lazy validation passed");
            if outcome.is_success() {
                commit.executed += 1;
            } else {
                commit.failed += 1;
            }
            committed.push(tx.digest());
            txs.push((tx.clone(), outcome));
        }
        self.tip = Some((digest, timestamp));
        let record = BlockRecord {
            slot: block.proposer(),
            digest,
            parent: sealed.parent_digest(),
            timestamp,
            txs,
        };
        (record, commit)
    }

    fn finish_index(&mut self, index: u64) {
        self.state.set_height(index + 1);
        if let (Some(schedule), Some(m)) = (&mut self.schedule, &self.contracts.membership) {
            let known: usize = schedule.changes().count() - 1;
            for c in m.selections.iter().skip(known) {
                schedule.record(index, c.clone());
            }
        }
    }

    pub fn read_value(&self, key: ReadKey) -> ReadValue {
        match key {
            ReadKey::Account(id) => ReadValue::Account(self.state.account(id)),
            ReadKey::Payload(id, nonce) => ReadValue::Payload(self.state.payload(id, nonce).map(<[u8]>::to_vec)),
        }
    }

    /// Balance of `account`, for convenience.
    pub fn balance(&self, account: AccountId) -> u64 {
        self.state.account(account).balance
    }
}

impl ReadService for StateNode {
    fn id(&self) -> NodeId {
        self.id
    }

    fn read(&self, key: ReadKey) -> ReadResponse {
        ReadResponse {
            height: self.state.height(),
            state_digest: self.state.state_digest(),
            value: self.read_value(key),
            responder: self.id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use collachain_core::KeyedMac;

    fn node(threshold: usize, mode: CommitMode) -> (StateNode, Arc<KeyedMac>) {
        let scheme = Arc::new(KeyedMac::default());
        let mut cfg = ChainConfig::for_nodes(4);
        cfg.proposal_threshold = threshold;
        cfg.pool_capacity = 10 * threshold;
        let genesis = WorldState::genesis((1..=5).map(|i| (AccountId(i), 1_000)));
        (StateNode::in_memory(NodeId(0), cfg, scheme.clone(), genesis, mode), scheme)
    }

    fn tx(scheme: &KeyedMac, sender: u64, nonce: u64) -> Transaction {
        Transaction::unsigned(AccountId(sender), Some(AccountId(9)), nonce, 1, 21, vec![]).signed(scheme)
    }

    #[test]
    fn submit_then_threshold_proposal() {
        let (mut n, s) = node(3, CommitMode::PerBlock);
        n.submit_transaction(tx(&s, 2, 0)).unwrap();
        n.submit_transaction(tx(&s, 1, 0)).unwrap();
        assert!(n.build_proposal(5).is_none());
        n.submit_transaction(tx(&s, 1, 1)).unwrap();
        let b = n.build_proposal(5).unwrap();
        let keys: Vec<_> = b.transactions().iter().map(|t| (t.sender.0, t.nonce)).collect();
        assert_eq!(keys, vec![(1, 0), (1, 1), (2, 0)]);
        assert_eq!(n.counters().eager, 3);
    }

    #[test]
    fn bad_signature_is_dropped() {
        let (mut n, s) = node(3, CommitMode::PerBlock);
        let mut t = tx(&s, 1, 0);
        t.amount = 2;
        assert_eq!(
            n.submit_transaction(t),
            Err(DropReason::Rejected(RejectReason::BadSignature))
        );
        assert!(n.pool().is_empty());
    }

    #[test]
    fn forged_transaction_in_a_block_is_discarded_without_nonce_bump() {
        let (mut n, s) = node(1, CommitMode::PerBlock);
        let mut forged = tx(&s, 1, 0);
        forged.amount = 500;
        let b = Arc::new(Block::proposal(NodeId(3), vec![forged], 1).unwrap());
        let r = n.commit_superblock(&Superblock::new(0, vec![b]).unwrap()).unwrap();
        assert_eq!(r.blocks[0].forged, 1);
        assert_eq!(n.state().account(AccountId(1)).nonce, 0);
        assert_eq!(n.balance(AccountId(1)), 1_000);
    }

    #[test]
    fn empty_superblock_still_advances_height_and_logs() {
        let (mut n, _) = node(1, CommitMode::PerBlock);
        n.commit_superblock(&Superblock::new(0, vec![]).unwrap()).unwrap();
        assert_eq!(n.height(), 1);
        assert_eq!(n.log().len(), 1);
        assert!(matches!(
            n.commit_superblock(&Superblock::new(5, vec![]).unwrap()),
            Err(CommitError::OutOfOrder { expected: 1, got: 5 })
        ));
    }
}
