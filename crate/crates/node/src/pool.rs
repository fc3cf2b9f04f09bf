// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Eager-validated transactions awaiting proposal.
//!
//! Selection serves senders in arrival order and, per sender, the lowest
//! pooled nonce first, so a block never carries nonce `k + 1` of a sender
//! while nonce `k` stays behind. Capacity covers both pooled transactions and
//! those in proposals that have not committed yet; a slow commit pipeline
//! therefore backs up into the pool and surfaces as overload drops.

use std::collections::{BTreeMap, VecDeque};

use collachain_core::{AccountId, RejectReason, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    Rejected(RejectReason),
    Overload,
    Duplicate,
}

impl DropReason {
    pub fn label(self) -> &'static str {
        match self {
            DropReason::Rejected(r) => match r {
                RejectReason::BadNonce => "bad_nonce",
                RejectReason::InsufficientBalance => "insufficient_balance",
                RejectReason::GasTooLow => "gas_too_low",
                RejectReason::ExceedsBlockGas => "exceeds_block_gas",
                RejectReason::BadSignature => "bad_signature",
                RejectReason::Oversized => "oversized",
                RejectReason::StaleNonce => "stale_nonce",
            },
            DropReason::Overload => "overload",
            DropReason::Duplicate => "duplicate",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TxPool {
    capacity: usize,
    by_sender: BTreeMap<AccountId, BTreeMap<u64, Transaction>>,
    /// One entry per pooled transaction, naming its sender.
    arrivals: VecDeque<AccountId>,
    len: usize,
    in_flight: usize,
    drops: BTreeMap<DropReason, u64>,
}

impl TxPool {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            ..Self::default()
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Transactions handed to proposals and not yet committed.
    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn contains(&self, sender: AccountId, nonce: u64) -> bool {
        self.by_sender
            .get(&sender)
            .is_some_and(|m| m.contains_key(&nonce))
    }

    pub fn drops(&self) -> &BTreeMap<DropReason, u64> {
        &self.drops
    }

    pub fn drop_count(&self) -> u64 {
        self.drops.values().sum()
    }

    pub fn record_drop(&mut self, reason: DropReason) {
        *self.drops.entry(reason).or_default() += 1;
    }

    /// Insert an already validated transaction.
    pub fn insert(&mut self, tx: Transaction) -> Result<(), DropReason> {
        if self.contains(tx.sender, tx.nonce) {
            self.record_drop(DropReason::Duplicate);
            return Err(DropReason::Duplicate);
        }
        if self.len + self.in_flight >= self.capacity {
            self.record_drop(DropReason::Overload);
            return Err(DropReason::Overload);
        }
        self.arrivals.push_back(tx.sender);
        self.by_sender.entry(tx.sender).or_default().insert(tx.nonce, tx);
        self.len += 1;
        Ok(())
    }

    /// Remove up to `max` transactions, oldest first, sorted by
    /// `(sender, nonce)`. They count as in flight until `settle`.
    pub fn take(&mut self, max: usize) -> Vec<Transaction> {
        let mut out = Vec::with_capacity(max.min(self.len));
        while out.len() < max {
            let Some(sender) = self.arrivals.pop_front() else {
                break;
            };
            // Stale arrivals (pruned entries) are skipped.
            let Some(txs) = self.by_sender.get_mut(&sender) else {
                continue;
            };
            let Some((_, tx)) = txs.pop_first() else {
                continue;
            };
            if txs.is_empty() {
                self.by_sender.remove(&sender);
            }
            self.len -= 1;
            out.push(tx);
        }
        self.in_flight += out.len();
        out.sort_by_key(Transaction::order_key);
        out
    }

    /// Release in-flight capacity once a proposal commits.
    pub fn settle(&mut self, count: usize) {
        self.in_flight = self.in_flight.saturating_sub(count);
    }

    /// Drop pooled entries of `sender` with a nonce below `next_nonce`.
    pub fn prune(&mut self, sender: AccountId, next_nonce: u64) -> usize {
        let Some(txs) = self.by_sender.get_mut(&sender) else {
            return 0;
        };
        let keep = txs.split_off(&next_nonce);
        let removed = txs.len();
        *txs = keep;
        if txs.is_empty() {
            self.by_sender.remove(&sender);
        }
        self.len -= removed;
        // Matching arrival entries become stale; drop them from the front
        // lazily and compact when they dominate.
        if self.arrivals.len() > 2 * self.len + 64 {
            self.compact_arrivals();
        }
        removed
    }

    fn compact_arrivals(&mut self) {
        let mut budget: BTreeMap<AccountId, usize> =
            self.by_sender.iter().map(|(s, m)| (*s, m.len())).collect();
        // Keep the latest arrivals per sender; older ones were consumed.
        let mut kept: Vec<AccountId> = Vec::with_capacity(self.len);
        for s in self.arrivals.iter().rev() {
            if let Some(b) = budget.get_mut(s) {
                if *b > 0 {
                    *b -= 1;
                    kept.push(*s);
                }
            }
        }
        kept.reverse();
        self.arrivals = kept.into();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.by_sender.values().flat_map(|m| m.values())
    }
}
