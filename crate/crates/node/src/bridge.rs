// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Cross-shard withdraw and credit.
//!
//! A withdraw sends `amount` to [`AccountId::BRIDGE`] and the contract burns
//! it. A credit on the destination shard mints `amount` to the beneficiary,
//! once per withdraw reference. The two are separate transactions on
//! separate chains and are not atomic.
//!
//! Payloads:
//!
//! * withdraw: `0x10 | dst_shard: u32`
//! * credit: `0x11 | src_shard: u32 | index: u64 | slot: u32 | tx_digest | beneficiary: u64 | amount: u64`

use std::collections::BTreeSet;

use collachain_core::codec::{CodecResult, Reader, Writer};
use collachain_core::{AccountId, Digest, NodeId, Transaction, WorldState};

pub const TAG_WITHDRAW: u8 = 0x10;
pub const TAG_CREDIT: u8 = 0x11;

/// Where a withdraw committed: enough for the destination to deduplicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WithdrawRef {
    pub src_shard: u32,
    pub index: u64,
    pub slot: NodeId,
    pub tx_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeCall {
    Withdraw { dst_shard: u32 },
    Credit { reference: WithdrawRef, beneficiary: AccountId, amount: u64 },
}

impl BridgeCall {
    pub fn encode(&self) -> CodecResult<Vec<u8>> {
        let mut w = Writer::new();
        match self {
            BridgeCall::Withdraw { dst_shard } => {
                w.put_u8(TAG_WITHDRAW);
                w.put_u32(*dst_shard);
            }
            BridgeCall::Credit {
                reference,
                beneficiary,
                amount,
            } => {
                w.put_u8(TAG_CREDIT);
                w.put_u32(reference.src_shard);
                w.put_u64(reference.index);
                w.put_u32(reference.slot.0);
                w.put_digest(&reference.tx_digest);
                w.put_u64(beneficiary.0);
                w.put_u64(*amount);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let mut r = Reader::new(bytes);
        let call = match r.get_u8().ok()? {
            TAG_WITHDRAW => BridgeCall::Withdraw {
                dst_shard: r.get_u32().ok()?,
            },
            TAG_CREDIT => BridgeCall::Credit {
                reference: WithdrawRef {
                    src_shard: r.get_u32().ok()?,
                    index: r.get_u64().ok()?,
                    slot: NodeId(r.get_u32().ok()?),
                    tx_digest: r.get_digest().ok()?,
                },
                beneficiary: AccountId(r.get_u64().ok()?),
                amount: r.get_u64().ok()?,
            },
            _ => return None,
        };
        r.finish().ok()?;
        Some(call)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BridgeContract {
    credited: BTreeSet<WithdrawRef>,
    pub burned: u128,
    pub minted: u128,
}

impl BridgeContract {
    pub fn is_credited(&self, r: &WithdrawRef) -> bool {
        self.credited.contains(r)
    }

    /// Runs after the value transfer to the bridge account.
    pub fn call(&mut self, tx: &Transaction, state: &mut WorldState) -> Result<(), ()> {
        match BridgeCall::decode(&tx.payload).ok_or(())? {
            BridgeCall::Withdraw { .. } => {
                if tx.amount == 0 {
                    return Err(());
                }
                state.adjust_balance(AccountId::BRIDGE, -(tx.amount as i128)).map_err(|_| ())?;
                self.burned += tx.amount as u128;
                Ok(())
            }
            BridgeCall::Credit {
                reference,
                beneficiary,
                amount,
            } => {
                if tx.amount != 0 || self.credited.contains(&reference) || beneficiary.is_builtin() {
                    return Err(());
                }
                state.adjust_balance(beneficiary, amount as i128).map_err(|_| ())?;
                self.credited.insert(reference);
                self.minted += amount as u128;
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> WithdrawRef {
        WithdrawRef {
            src_shard: 1,
            index: 4,
            slot: NodeId(2),
            tx_digest: Digest([7; 32]),
        }
    }

    #[test]
    fn payload_roundtrip() {
        let calls = [
            BridgeCall::Withdraw { dst_shard: 3 },
            BridgeCall::Credit {
                reference: reference(),
                beneficiary: AccountId(5),
                amount: 9,
            },
        ];
        for c in calls {
            assert_eq!(BridgeCall::decode(&c.encode().unwrap()), Some(c));
        }
    }

    #[test]
    fn credit_is_applied_once_per_reference() {
        let mut bridge = BridgeContract::default();
        let mut state = WorldState::genesis([(AccountId(5), 0)]);
        let payload = BridgeCall::Credit {
            reference: reference(),
            beneficiary: AccountId(5),
            amount: 9,
        }
        .encode()
        .unwrap();
        let tx = Transaction::unsigned(AccountId(6), Some(AccountId::BRIDGE), 0, 0, 21, payload);
        bridge.call(&tx, &mut state).unwrap();
        assert!(bridge.call(&tx, &mut state).is_err());
        assert_eq!(state.account(AccountId(5)).balance, 9);
        assert_eq!(bridge.minted, 9);
    }
}
