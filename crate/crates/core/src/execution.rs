// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic execution with state reversal on failure.
//!
//! A failed execution reverts every effect except the nonce increment, so a
//! failing transaction can never be replayed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::WorldState;
use crate::types::{AccountId, ChainConfig, Transaction};
use crate::validation::{lazy_check, RejectReason};

/// Payloads starting with this marker fault during execution. Test hook for
/// the revert path.
pub const FAULT_MARKER: &[u8] = b"\xffFAULT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecFailure {
    FaultInjected,
    InsufficientBalance,
    /// Value transfer without a recipient.
    MissingRecipient,
    Overflow,
    ContractRejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecOutcome {
    Success,
    Failed(ExecFailure),
}

impl ExecOutcome {
    pub fn is_success(self) -> bool {
        matches!(self, ExecOutcome::Success)
    }

    pub fn code(self) -> u8 {
        match self {
            ExecOutcome::Success => 0,
            ExecOutcome::Failed(ExecFailure::FaultInjected) => 1,
            ExecOutcome::Failed(ExecFailure::InsufficientBalance) => 2,
            ExecOutcome::Failed(ExecFailure::MissingRecipient) => 3,
            ExecOutcome::Failed(ExecFailure::Overflow) => 4,
            ExecOutcome::Failed(ExecFailure::ContractRejected) => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ExecOutcome::Success,
            1 => ExecOutcome::Failed(ExecFailure::FaultInjected),
            2 => ExecOutcome::Failed(ExecFailure::InsufficientBalance),
            3 => ExecOutcome::Failed(ExecFailure::MissingRecipient),
            4 => ExecOutcome::Failed(ExecFailure::Overflow),
            5 => ExecOutcome::Failed(ExecFailure::ContractRejected),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    /// The caller executed a transaction that does not pass lazy validation.
    #[error("execution precondition violated: {0}")]
    Precondition(RejectReason),
}

/// Built-in contracts reachable as transaction recipients.
pub trait ContractHost {
    fn handles(&self, account: AccountId) -> bool;

    /// Runs after the value transfer has been applied. Returning `Err` makes
    /// the whole transaction fail; the host must not have changed its own
    /// state in that case.
    fn call(&mut self, tx: &Transaction, state: &mut WorldState) -> Result<(), ()>;
}

pub struct NoContracts;

impl ContractHost for NoContracts {
    fn handles(&self, _: AccountId) -> bool {
        false
    }

    fn call(&mut self, _: &Transaction, _: &mut WorldState) -> Result<(), ()> {
        Ok(())
    }
}

/// Pure form: returns the successor state and the outcome.
pub fn apply_transaction(
    state: &WorldState,
    tx: &Transaction,
    cfg: &ChainConfig,
) -> Result<(WorldState, ExecOutcome), ExecError> {
    let mut next = state.clone();
    let outcome = execute(&mut next, tx, cfg, &mut NoContracts)?;
    Ok((next, outcome))
}

/// In-place execution. `tx` must pass lazy validation against `state`.
pub fn execute(
    state: &mut WorldState,
    tx: &Transaction,
    cfg: &ChainConfig,
    host: &mut dyn ContractHost,
) -> Result<ExecOutcome, ExecError> {
    if let Some(reason) = lazy_check(tx, state, cfg).reason {
        return Err(ExecError::Precondition(reason));
    }
    let contract = tx.recipient.filter(|r| host.handles(*r));
    let outcome = match contract {
        Some(_) => {
            let saved = state.clone();
            let outcome = match transfer(state, tx, cfg) {
                Ok(()) => match host.call(tx, state) {
                    Ok(()) => ExecOutcome::Success,
                    Err(()) => ExecOutcome::Failed(ExecFailure::ContractRejected),
                },
                Err(e) => ExecOutcome::Failed(e),
            };
            if !outcome.is_success() {
                *state = saved;
            }
            outcome
        }
        None => match transfer(state, tx, cfg) {
            Ok(()) => ExecOutcome::Success,
            Err(e) => ExecOutcome::Failed(e),
        },
    };
    state.account_mut(tx.sender).nonce += 1;
    Ok(outcome)
}

/// Value transfer, fee, and payload storage. Leaves `state` untouched on error.
fn transfer(state: &mut WorldState, tx: &Transaction, cfg: &ChainConfig) -> Result<(), ExecFailure> {
    if tx.payload.starts_with(FAULT_MARKER) {
        return Err(ExecFailure::FaultInjected);
    }
    if tx.amount > 0 && tx.recipient.is_none() {
        return Err(ExecFailure::MissingRecipient);
    }
    let fee = cfg.flat_gas_fee;
    let debit = tx.amount.checked_add(fee).ok_or(ExecFailure::Overflow)?;
    let sender = state.account(tx.sender);
    if sender.balance < debit {
        return Err(ExecFailure::InsufficientBalance);
    }
    if let Some(r) = tx.recipient {
        if r != tx.sender {
            state
                .account(r)
                .balance
                .checked_add(tx.amount)
                .ok_or(ExecFailure::Overflow)?;
        }
    }
    if fee > 0 {
        state
            .account(AccountId::FEE_SINK)
            .balance
            .checked_add(fee)
            .ok_or(ExecFailure::Overflow)?;
    }

    state.account_mut(tx.sender).balance -= debit;
    if let Some(r) = tx.recipient {
        state.account_mut(r).balance += tx.amount;
    }
    if fee > 0 {
        state.account_mut(AccountId::FEE_SINK).balance += fee;
    }
    if !tx.payload.is_empty() {
        state.store_payload(tx.sender, tx.nonce, tx.payload.clone());
    }
    Ok(())
}

/// Undo hook used by crash-recovery tests: drops a stored payload.
#[doc(hidden)]
pub fn forget_payload(state: &mut WorldState, sender: AccountId, nonce: u64) {
    state.remove_payload(sender, nonce);
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: AccountId = AccountId(1);
    const B: AccountId = AccountId(2);

    fn tx(nonce: u64, recipient: Option<AccountId>, amount: u64, payload: &[u8]) -> Transaction {
        Transaction::unsigned(A, recipient, nonce, amount, 21, payload.to_vec())
    }

    #[test]
    fn transfer_moves_value_and_bumps_nonce() {
        let s = WorldState::genesis([(A, 10)]);
        let (s2, out) = apply_transaction(&s, &tx(0, Some(B), 5, b""), &ChainConfig::default()).unwrap();
        assert_eq!(out, ExecOutcome::Success);
        assert_eq!(s2.account(A).balance, 5);
        assert_eq!(s2.account(B).balance, 5);
        assert_eq!(s2.account(A).nonce, 1);
        // The input state is untouched.
        assert_eq!(s.account(A).balance, 10);
    }

    #[test]
    fn fault_reverts_everything_but_nonce() {
        let s = WorldState::genesis([(A, 10)]);
        let mut payload = FAULT_MARKER.to_vec();
        payload.extend_from_slice(b"boom");
        let (s2, out) = apply_transaction(&s, &tx(0, Some(B), 5, &payload), &ChainConfig::default()).unwrap();
        assert_eq!(out, ExecOutcome::Failed(ExecFailure::FaultInjected));
        assert_eq!(s2.account(A), crate::state::Account { balance: 10, nonce: 1 });
        assert_eq!(s2.account(B).balance, 0);
        assert_eq!(s2.payload(A, 0), None);
    }

    #[test]
    fn balance_race_fails_execution() {
        let s = WorldState::genesis([(A, 3)]);
        let (s2, out) = apply_transaction(&s, &tx(0, Some(B), 5, b""), &ChainConfig::default()).unwrap();
        assert_eq!(out, ExecOutcome::Failed(ExecFailure::InsufficientBalance));
        assert_eq!(s2.account(A).balance, 3);
        assert_eq!(s2.account(A).nonce, 1);
    }

    #[test]
    fn message_post_stores_payload_and_charges_fee() {
        let cfg = ChainConfig {
            flat_gas_fee: 2,
            ..ChainConfig::default()
        };
        let s = WorldState::genesis([(A, 10)]);
        let msg = vec![b'x'; 140];
        let (s2, out) = apply_transaction(&s, &tx(0, None, 0, &msg), &cfg).unwrap();
        assert!(out.is_success());
        assert_eq!(s2.payload(A, 0), Some(&msg[..]));
        assert_eq!(s2.account(A).balance, 8);
        assert_eq!(s2.account(AccountId::FEE_SINK).balance, 2);
        assert_eq!(s2.total_balance(), 10);
    }

    #[test]
    fn precondition_violation_is_an_error() {
        let s = WorldState::genesis([(A, 10)]);
        let err = apply_transaction(&s, &tx(1, Some(B), 1, b""), &ChainConfig::default()).unwrap_err();
        assert_eq!(err, ExecError::Precondition(RejectReason::BadNonce));
    }

    struct Rejecting;
    impl ContractHost for Rejecting {
        fn handles(&self, a: AccountId) -> bool {
            a == AccountId::BRIDGE
        }
        fn call(&mut self, _: &Transaction, state: &mut WorldState) -> Result<(), ()> {
            state.adjust_balance(AccountId(77), 1000).unwrap();
            Err(())
        }
    }

    #[test]
    fn contract_failure_reverts_contract_side_effects() {
        let mut s = WorldState::genesis([(A, 10)]);
        let t = tx(0, Some(AccountId::BRIDGE), 4, b"w");
        let out = execute(&mut s, &t, &ChainConfig::default(), &mut Rejecting).unwrap();
        assert_eq!(out, ExecOutcome::Failed(ExecFailure::ContractRejected));
        assert_eq!(s.account(A), crate::state::Account { balance: 10, nonce: 1 });
        assert_eq!(s.account(AccountId(77)).balance, 0);
    }

    #[test]
    fn outcome_codes_roundtrip() {
        for code in 0..=5 {
            assert_eq!(ExecOutcome::from_code(code).unwrap().code(), code);
        }
        assert!(ExecOutcome::from_code(6).is_none());
    }
}
