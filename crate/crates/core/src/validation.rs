// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Eager (pre-consensus) and lazy (pre-execution) transaction validation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::signature::SignatureScheme;
use crate::state::WorldState;
use crate::types::{ChainConfig, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    /// Nonce too far ahead of the account nonce (or, lazily, not the next one).
    BadNonce,
    InsufficientBalance,
    GasTooLow,
    ExceedsBlockGas,
    BadSignature,
    Oversized,
    /// Nonce already consumed.
    StaleNonce,
}

impl RejectReason {
    pub const ALL: [RejectReason; 7] = [
        RejectReason::BadNonce,
        RejectReason::InsufficientBalance,
        RejectReason::GasTooLow,
        RejectReason::ExceedsBlockGas,
        RejectReason::BadSignature,
        RejectReason::Oversized,
        RejectReason::StaleNonce,
    ];

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code.checked_sub(1)? as usize).copied()
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidationKind {
    Eager,
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValidationVerdict {
    pub kind: ValidationKind,
    /// `None` iff the transaction was accepted.
    pub reason: Option<RejectReason>,
}

impl ValidationVerdict {
    fn accept(kind: ValidationKind) -> Self {
        Self { kind, reason: None }
    }

    fn reject(kind: ValidationKind, reason: RejectReason) -> Self {
        Self {
            kind,
            reason: Some(reason),
        }
    }

    pub fn accepted(&self) -> bool {
        self.reason.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidationCounters {
    pub eager: u64,
    pub lazy: u64,
}

impl ValidationCounters {
    pub fn total(&self) -> u64 {
        self.eager + self.lazy
    }
}

/// One node's validator: configuration, signature scheme and its tallies.
#[derive(Clone)]
pub struct Validator {
    cfg: ChainConfig,
    scheme: Arc<dyn SignatureScheme>,
    counters: ValidationCounters,
}

impl fmt::Debug for Validator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Validator")
            .field("counters", &self.counters)
            .finish_non_exhaustive()
    }
}

impl Validator {
    pub fn new(cfg: ChainConfig, scheme: Arc<dyn SignatureScheme>) -> Self {
        Self {
            cfg,
            scheme,
            counters: ValidationCounters::default(),
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn scheme(&self) -> &Arc<dyn SignatureScheme> {
        &self.scheme
    }

    pub fn counters(&self) -> ValidationCounters {
        self.counters
    }

    /// Full reception-time check: size, signature, nonce window, gas, balance.
    pub fn eager_validate(&mut self, tx: &Transaction, state: &WorldState) -> ValidationVerdict {
        self.counters.eager += 1;
        let kind = ValidationKind::Eager;
        let reject = |r| ValidationVerdict::reject(kind, r);
        let cfg = &self.cfg;

        if tx.size() > cfg.max_tx_size {
            return reject(RejectReason::Oversized);
        }
        if !tx.verify(self.scheme.as_ref()) {
            return reject(RejectReason::BadSignature);
        }
        let account = state.account(tx.sender);
        if tx.nonce < account.nonce {
            return reject(RejectReason::StaleNonce);
        }
        if tx.nonce - account.nonce >= cfg.nonce_window {
            return reject(RejectReason::BadNonce);
        }
        if tx.gas_limit < cfg.intrinsic_gas {
            return reject(RejectReason::GasTooLow);
        }
        if tx.gas_limit > cfg.max_block_gas {
            return reject(RejectReason::ExceedsBlockGas);
        }
        let needed = tx.amount as u128 + cfg.flat_gas_fee as u128;
        if (account.balance as u128) < needed {
            return reject(RejectReason::InsufficientBalance);
        }
        ValidationVerdict::accept(kind)
    }

    /// Post-consensus check: exact next nonce and intrinsic gas only.
    pub fn lazy_validate(&mut self, tx: &Transaction, state: &WorldState) -> ValidationVerdict {
        self.counters.lazy += 1;
        lazy_check(tx, state, &self.cfg)
    }
}

/// The lazy rule without touching any counter; used for precondition checks
/// and by auditors.
pub fn lazy_check(tx: &Transaction, state: &WorldState, cfg: &ChainConfig) -> ValidationVerdict {
    let kind = ValidationKind::Lazy;
    let expected = state.account(tx.sender).nonce;
    if tx.nonce < expected {
        return ValidationVerdict::reject(kind, RejectReason::StaleNonce);
    }
    if tx.nonce > expected {
        return ValidationVerdict::reject(kind, RejectReason::BadNonce);
    }
    if tx.gas_limit < cfg.intrinsic_gas {
        return ValidationVerdict::reject(kind, RejectReason::GasTooLow);
    }
    ValidationVerdict::accept(kind)
}
