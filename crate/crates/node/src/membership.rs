// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Committee rotation.
//!
//! The chairperson registers endpoints with their wallets. Each registered
//! endpoint may then vote once per round for a seed `val` in `0..=9`. When
//! some seed gathers `threshold = (size - 1) / 3 + 1` votes, the committee is
//! the slice `endpoints[option * member .. (option + 1) * member]` with
//! `select = size / member` and `option = val % select`. All tallies and
//! call flags then reset.
//!
//! When `size` is not a multiple of `member`, the trailing
//! `size - select * member` endpoints can never be selected.
//!
//! Registry changes only happen through committed transactions addressed to
//! [`AccountId::MEMBERSHIP`]; payloads are
//!
//! * `0x01 | member: u32 | count: u32 | (wallet: u64 | endpoint: bytes)*`
//! * `0x02 | val: u8`

use std::collections::BTreeMap;

use collachain_core::codec::{decode_list, CodecResult, Reader, Writer};
use collachain_core::{AccountId, Transaction, WorldState};
use thiserror::Error;

pub const TAG_ADD_PARTICIPANTS: u8 = 0x01;
pub const TAG_VOTE: u8 = 0x02;
pub const MAX_SEED: u8 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MembershipError {
    #[error("only the chairperson may register participants")]
    Unauthorized,
    #[error("bad input: {0}")]
    BadInput(&'static str),
    #[error("vote rejected: {0}")]
    Rejected(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CommitteeRegistry {
    chairperson: AccountId,
    committee: Vec<String>,
    wallet_to_endpoint: BTreeMap<AccountId, String>,
    has_called: BTreeMap<String, bool>,
    vote_tally: [u32; MAX_SEED as usize + 1],
    member: usize,
}

impl CommitteeRegistry {
    pub fn new(chairperson: AccountId) -> Self {
        Self {
            chairperson,
            committee: Vec::new(),
            wallet_to_endpoint: BTreeMap::new(),
            has_called: BTreeMap::new(),
            vote_tally: [0; MAX_SEED as usize + 1],
            member: 0,
        }
    }

    pub fn chairperson(&self) -> AccountId {
        self.chairperson
    }

    pub fn endpoints(&self) -> &[String] {
        &self.committee
    }

    pub fn size(&self) -> usize {
        self.committee.len()
    }

    pub fn member(&self) -> usize {
        self.member
    }

    pub fn threshold(&self) -> usize {
        (self.size().saturating_sub(1)) / 3 + 1
    }

    pub fn tally(&self, val: u8) -> u32 {
        self.vote_tally.get(val as usize).copied().unwrap_or(0)
    }

    pub fn has_called(&self, endpoint: &str) -> bool {
        self.has_called.get(endpoint).copied().unwrap_or(false)
    }

    pub fn add_participants(
        &mut self,
        caller: AccountId,
        endpoints: Vec<String>,
        member: usize,
        wallets: Vec<AccountId>,
    ) -> Result<(), MembershipError> {
        if caller != self.chairperson {
            return Err(MembershipError::Unauthorized);
        }
        if endpoints.len() != wallets.len() {
            return Err(MembershipError::BadInput("endpoint and wallet counts differ"));
        }
        if member == 0 || member > endpoints.len() {
            return Err(MembershipError::BadInput("member must be in 1..=size"));
        }
        self.wallet_to_endpoint = wallets.into_iter().zip(endpoints.iter().cloned()).collect();
        self.has_called = endpoints.iter().map(|e| (e.clone(), false)).collect();
        self.committee = endpoints;
        self.member = member;
        self.vote_tally = [0; MAX_SEED as usize + 1];
        Ok(())
    }

    /// Returns the selected committee when this vote reaches the threshold.
    pub fn rotate_vote(&mut self, caller: AccountId, val: u8) -> Result<Option<Vec<String>>, MembershipError> {
        if val > MAX_SEED {
            return Err(MembershipError::BadInput("seed out of range"));
        }
        let endpoint = self
            .wallet_to_endpoint
            .get(&caller)
            .ok_or(MembershipError::Rejected("caller not registered"))?;
        if self.has_called(endpoint) {
            return Err(MembershipError::Rejected("already voted this round"));
        }
        self.has_called.insert(endpoint.clone(), true);
        self.vote_tally[val as usize] += 1;
        if self.vote_tally[val as usize] as usize != self.threshold() {
            return Ok(None);
        }
        let select = self.size() / self.member;
        let option = val as usize % select;
        let chosen = self.committee[option * self.member..(option + 1) * self.member].to_vec();
        self.vote_tally = [0; MAX_SEED as usize + 1];
        for v in self.has_called.values_mut() {
            *v = false;
        }
        Ok(Some(chosen))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MembershipCall {
    AddParticipants {
        member: u32,
        participants: Vec<(AccountId, String)>,
    },
    Vote(u8),
}

impl MembershipCall {
    pub fn encode(&self) -> CodecResult<Vec<u8>> {
        let mut w = Writer::new();
        match self {
            MembershipCall::AddParticipants { member, participants } => {
                w.put_u8(TAG_ADD_PARTICIPANTS);
                w.put_u32(*member);
                w.put_len(participants.len())?;
                for (wallet, endpoint) in participants {
                    w.put_u64(wallet.0);
                    w.put_bytes(endpoint.as_bytes())?;
                }
            }
            MembershipCall::Vote(val) => {
                w.put_u8(TAG_VOTE);
                w.put_u8(*val);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let mut r = Reader::new(bytes);
        let call = match r.get_u8().ok()? {
            TAG_ADD_PARTICIPANTS => {
                let member = r.get_u32().ok()?;
                let participants = decode_list(&mut r, 12, |r| {
                    let wallet = AccountId(r.get_u64()?);
                    let endpoint = String::from_utf8(r.get_bytes()?)
                        .map_err(|_| collachain_core::CodecError::Malformed("endpoint utf-8"))?;
                    Ok((wallet, endpoint))
                })
                .ok()?;
                MembershipCall::AddParticipants { member, participants }
            }
            TAG_VOTE => MembershipCall::Vote(r.get_u8().ok()?),
            _ => return None,
        };
        r.finish().ok()?;
        Some(call)
    }
}

/// Committee in force per consensus index. A selection made while committing
/// index `k` takes effect from index `k + 1`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommitteeSchedule {
    changes: BTreeMap<u64, Vec<String>>,
}

impl CommitteeSchedule {
    pub fn new(genesis: Vec<String>) -> Self {
        Self {
            changes: BTreeMap::from([(0, genesis)]),
        }
    }

    pub fn record(&mut self, selected_at: u64, committee: Vec<String>) {
        self.changes.insert(selected_at + 1, committee);
    }

    pub fn committee_at(&self, index: u64) -> Option<&[String]> {
        self.changes.range(..=index).next_back().map(|(_, c)| c.as_slice())
    }

    pub fn changes(&self) -> impl Iterator<Item = (u64, &[String])> {
        self.changes.iter().map(|(i, c)| (*i, c.as_slice()))
    }
}

/// Contract state kept by the state node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipContract {
    pub registry: CommitteeRegistry,
    /// Committees selected so far, in commit order.
    pub selections: Vec<Vec<String>>,
}

impl MembershipContract {
    pub fn new(chairperson: AccountId) -> Self {
        Self {
            registry: CommitteeRegistry::new(chairperson),
            selections: Vec::new(),
        }
    }

    pub fn call(&mut self, tx: &Transaction, _state: &mut WorldState) -> Result<(), MembershipError> {
        let call = MembershipCall::decode(&tx.payload).ok_or(MembershipError::BadInput("payload"))?;
        match call {
            MembershipCall::AddParticipants { member, participants } => {
                let (wallets, endpoints) = participants.into_iter().unzip();
                self.registry
                    .add_participants(tx.sender, endpoints, member as usize, wallets)
            }
            MembershipCall::Vote(val) => {
                if let Some(c) = self.registry.rotate_vote(tx.sender, val)? {
                    self.selections.push(c);
                }
                Ok(())
            }
        }
    }
}
