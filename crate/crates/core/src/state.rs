// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_list, Canonical, CodecResult, Reader, Writer};
use crate::digest::{digest_of, Digest};
use crate::types::AccountId;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Account {
    pub balance: u64,
    /// Next expected nonce.
    pub nonce: u64,
}

/// Replicated account/payload state.
///
/// The canonical serialization is `height`, then the account table sorted by
/// id, then the payload store sorted by `(sender, nonce)`. The state digest
/// is the digest of exactly that serialization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    accounts: BTreeMap<AccountId, Account>,
    payloads: BTreeMap<(AccountId, u64), Vec<u8>>,
    height: u64,
}

impl WorldState {
    pub fn genesis<I: IntoIterator<Item = (AccountId, u64)>>(balances: I) -> Self {
        let mut s = Self::default();
        for (id, balance) in balances {
            s.accounts.entry(id).or_default().balance += balance;
        }
        s
    }

    pub fn account(&self, id: AccountId) -> Account {
        self.accounts.get(&id).copied().unwrap_or_default()
    }

    pub fn accounts(&self) -> impl Iterator<Item = (AccountId, Account)> + '_ {
        self.accounts.iter().map(|(k, v)| (*k, *v))
    }

    pub(crate) fn account_mut(&mut self, id: AccountId) -> &mut Account {
        self.accounts.entry(id).or_default()
    }

    pub fn payload(&self, sender: AccountId, nonce: u64) -> Option<&[u8]> {
        self.payloads.get(&(sender, nonce)).map(Vec::as_slice)
    }

    pub fn payload_count(&self) -> usize {
        self.payloads.len()
    }

    pub(crate) fn store_payload(&mut self, sender: AccountId, nonce: u64, bytes: Vec<u8>) {
        self.payloads.insert((sender, nonce), bytes);
    }

    pub(crate) fn remove_payload(&mut self, sender: AccountId, nonce: u64) {
        self.payloads.remove(&(sender, nonce));
    }

    /// Direct balance adjustment for built-in contracts (mint/burn). Fails on
    /// underflow or overflow without changing anything.
    pub fn adjust_balance(&mut self, id: AccountId, delta: i128) -> Result<(), BalanceError> {
        let acct = self.accounts.entry(id).or_default();
        let next = acct.balance as i128 + delta;
        if next < 0 {
            return Err(BalanceError::Underflow);
        }
        acct.balance = u64::try_from(next).map_err(|_| BalanceError::Overflow)?;
        Ok(())
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn set_height(&mut self, height: u64) {
        self.height = height;
    }

    pub fn total_balance(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128).sum()
    }

    /// Total excluding one account; used to separate escrow from circulating supply.
    pub fn total_balance_excluding(&self, skip: AccountId) -> u128 {
        self.accounts
            .iter()
            .filter(|(id, _)| **id != skip)
            .map(|(_, a)| a.balance as u128)
            .sum()
    }

    pub fn serialize(&self) -> Vec<u8> {
        self.canonical_encode().expect("state within encoding limits")
    }

    pub fn state_digest(&self) -> Digest {
        digest_of(&self.serialize())
    }

    pub fn write_snapshot(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.serialize())
    }

    pub fn read_snapshot(path: &Path) -> io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::canonical_decode(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BalanceError {
    #[error("balance underflow")]
    Underflow,
    #[error("balance overflow")]
    Overflow,
}

impl Canonical for WorldState {
    fn encode_into(&self, w: &mut Writer) -> CodecResult<()> {
        w.put_u64(self.height);
        w.put_len(self.accounts.len())?;
        for (id, a) in &self.accounts {
            w.put_u64(id.0);
            w.put_u64(a.balance);
            w.put_u64(a.nonce);
        }
        w.put_len(self.payloads.len())?;
        for ((id, nonce), bytes) in &self.payloads {
            w.put_u64(id.0);
            w.put_u64(*nonce);
            w.put_bytes(bytes)?;
        }
        Ok(())
    }

    fn decode_from(r: &mut Reader<'_>) -> CodecResult<Self> {
        let height = r.get_u64()?;
        let accounts = decode_list(r, 24, |r| {
            Ok((
                AccountId(r.get_u64()?),
                Account {
                    balance: r.get_u64()?,
                    nonce: r.get_u64()?,
                },
            ))
        })?;
        let payloads = decode_list(r, 20, |r| {
            Ok(((AccountId(r.get_u64()?), r.get_u64()?), r.get_bytes()?))
        })?;
        if !accounts.windows(2).all(|w| w[0].0 < w[1].0)
            || !payloads.windows(2).all(|w| w[0].0 < w[1].0)
        {
            return Err(crate::codec::CodecError::Malformed("unsorted state table"));
        }
        Ok(Self {
            accounts: accounts.into_iter().collect(),
            payloads: payloads.into_iter().collect(),
            height,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip_preserves_digest() {
        let mut s = WorldState::genesis([(AccountId(1), 10), (AccountId(2), 5)]);
        s.store_payload(AccountId(1), 0, b"hi".to_vec());
        s.set_height(3);
        let dir = std::env::temp_dir().join(format!("cc-snap-{}", std::process::id()));
        s.write_snapshot(&dir).unwrap();
        let back = WorldState::read_snapshot(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(back, s);
        assert_eq!(back.state_digest(), s.state_digest());
    }

    #[test]
    fn digest_depends_on_height() {
        let mut s = WorldState::genesis([(AccountId(1), 10)]);
        let d0 = s.state_digest();
        s.set_height(1);
        assert_ne!(d0, s.state_digest());
    }

    #[test]
    fn adjust_balance_is_checked() {
        let mut s = WorldState::genesis([(AccountId(1), 10)]);
        assert_eq!(s.adjust_balance(AccountId(1), -11), Err(BalanceError::Underflow));
        assert_eq!(s.account(AccountId(1)).balance, 10);
        s.adjust_balance(AccountId(1), -10).unwrap();
        assert_eq!(s.account(AccountId(1)).balance, 0);
    }
}
