// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Shards spawned from a beacon chain, and non-atomic cross-shard transfers.
//!
//! The beacon and every shard are independent chains inside one simulator.
//! Spawning moves the deposits to [`AccountId::ESCROW`] on the beacon through
//! ordinary committed transfers and then starts a chain whose genesis holds
//! exactly those deposits. A transfer is a withdraw on the source shard (the
//! bridge burns the amount) followed, once it commits, by a credit on the
//! destination shard submitted by a per-shard relayer account; the bridge
//! mints once per withdraw reference.
//!
//! Conservation is checked on the reference node of every chain. Deposits
//! appear both in the escrow and in the shard balances, so escrow is audited
//! separately:
//!
//! ```text
//! beacon (without escrow) + shards + in flight == beacon genesis total
//! escrow == sum of shard deposits
//! ```

use std::collections::BTreeMap;
use std::time::Instant;

use collachain_core::types::max_faults;
use collachain_core::{AccountId, ChainConfig, Digest, Transaction, WorldState};
use collachain_node::{BridgeCall, CommitMode, Contracts, WithdrawRef};
use serde::Serialize;
use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::{ChainId, ChainSetup, Simulation, TxId, TxStatus};
use crate::monitor::Violation;
use crate::workload::constant_rate;

/// Relayer accounts live far above client accounts.
const RELAYER_BASE: u64 = 1 << 48;
/// Poll interval while waiting for beacon commits during a spawn.
const SPAWN_POLL_US: u64 = 10_000;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("bad input: {0}")]
    BadInput(&'static str),
    #[error("{account:?} holds {available} but {needed} is required")]
    InsufficientBalance { account: AccountId, available: u64, needed: u64 },
    #[error("unknown shard {0}")]
    UnknownShard(ChainId),
    #[error("escrow did not commit within {0} us")]
    SpawnTimeout(u64),
    #[error(transparent)]
    Violation(#[from] Box<Violation>),
    #[error("conservation broken: {0}")]
    Conservation(String),
}

impl From<Violation> for ShardError {
    fn from(v: Violation) -> Self {
        ShardError::Violation(Box::new(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardInfo {
    pub chain: ChainId,
    pub deposits: BTreeMap<AccountId, u64>,
    /// Global node ids in the simulator.
    pub nodes: std::ops::Range<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferState {
    /// Withdraw submitted, not yet committed.
    Submitted,
    /// Withdraw committed, credit not yet committed.
    InFlight,
    Completed,
    /// The withdraw failed at execution; nothing moved.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transfer {
    pub src: ChainId,
    pub dst: ChainId,
    pub account: AccountId,
    pub amount: u64,
    pub withdraw: TxId,
    pub withdraw_digest: Digest,
    pub reference: Option<WithdrawRef>,
    pub credit_digest: Option<Digest>,
    pub state: TransferState,
}

/// Balances the conservation audit is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Conservation {
    pub beacon: u128,
    pub escrow: u128,
    pub shards: u128,
    pub in_flight: u128,
    pub genesis: u128,
    pub deposits: u128,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.beacon + self.shards + self.in_flight == self.genesis && self.escrow == self.deposits
    }
}

pub struct ShardDirectory {
    sim: Simulation,
    shard_nodes: usize,
    shard_config: ChainConfig,
    shards: BTreeMap<ChainId, ShardInfo>,
    transfers: Vec<Transfer>,
    nonces: BTreeMap<(ChainId, AccountId), u64>,
    cursors: Vec<usize>,
    genesis_total: u128,
    /// Credits are not submitted while set (for staging delayed credits).
    pub hold_credits: bool,
}

impl ShardDirectory {
    /// A directory whose beacon is the chain described by `cfg`; shards get
    /// `shard_nodes` nodes each with the same chain parameters.
    pub fn new(cfg: SimConfig, shard_nodes: usize) -> Result<Self, crate::config::ConfigError> {
        let sim = Simulation::new(cfg.clone())?;
        let genesis_total = sim.reference(0).state().total_balance();
        Ok(Self {
            sim,
            shard_nodes,
            shard_config: ChainConfig {
                n: shard_nodes,
                f: max_faults(shard_nodes),
                ..cfg.chain
            },
            shards: BTreeMap::new(),
            transfers: Vec::new(),
            nonces: BTreeMap::new(),
            cursors: vec![0],
            genesis_total,
            hold_credits: false,
        })
    }

    pub fn beacon(&self) -> ChainId {
        0
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn shards(&self) -> &BTreeMap<ChainId, ShardInfo> {
        &self.shards
    }

    pub fn transfers(&self) -> &[Transfer] {
        &self.transfers
    }

    pub fn balance(&self, chain: ChainId, account: AccountId) -> u64 {
        self.sim.reference(chain).balance(account)
    }

    fn next_nonce(&mut self, chain: ChainId, account: AccountId) -> u64 {
        let start = self.sim.reference(chain).state().account(account).nonce;
        let n = self.nonces.entry((chain, account)).or_insert(start);
        let out = *n;
        *n += 1;
        out
    }

    fn signed(&mut self, chain: ChainId, sender: AccountId, recipient: AccountId, amount: u64, payload: Vec<u8>) -> Transaction {
        let nonce = self.next_nonce(chain, sender);
        let gas = self.shard_config.intrinsic_gas;
        Transaction::unsigned(sender, Some(recipient), nonce, amount, gas, payload).signed(self.sim.scheme().as_ref())
    }

    /// Escrow `deposits` on the beacon and start a shard funded with them.
    /// Balances are checked first, so a rejected spawn escrows nothing.
    pub fn spawn_shard(&mut self, deposits: BTreeMap<AccountId, u64>, deadline: u64) -> Result<ChainId, ShardError> {
        if deposits.is_empty() {
            return Err(ShardError::BadInput("no deposits"));
        }
        if deposits.keys().any(|a| a.is_builtin() || a.0 >= RELAYER_BASE) {
            return Err(ShardError::BadInput("deposits must come from client accounts"));
        }
        for (account, amount) in &deposits {
            let available = self.spendable(0, *account);
            if available < *amount {
                return Err(ShardError::InsufficientBalance {
                    account: *account,
                    available,
                    needed: *amount,
                });
            }
        }
        let now = self.sim.now();
        let ids: Vec<TxId> = deposits
            .iter()
            .map(|(account, amount)| {
                let tx = self.signed(0, *account, AccountId::ESCROW, *amount, Vec::new());
                self.sim.inject(0, now, tx)
            })
            .collect();
        let limit = now + deadline;
        while ids.iter().any(|id| self.sim.tx_status(*id) != TxStatus::Committed) {
            if self.sim.now() >= limit {
                return Err(ShardError::SpawnTimeout(deadline));
            }
            let t = self.sim.now() + SPAWN_POLL_US;
            self.sim.run_until(t)?;
        }
        self.sync();
        let genesis = WorldState::genesis(deposits.iter().map(|(a, v)| (*a, *v)));
        let chain = self.sim.add_chain(ChainSetup {
            n: self.shard_nodes,
            f: self.shard_config.f,
            adversaries: BTreeMap::new(),
            chain: self.shard_config.clone(),
            genesis,
            contracts: Contracts::default(),
            commit_mode: CommitMode::PerBlock,
        });
        self.cursors.push(0);
        self.shards.insert(
            chain,
            ShardInfo {
                chain,
                deposits,
                nodes: self.sim.chain_members(chain),
            },
        );
        Ok(chain)
    }

    /// Balance minus withdrawals that were submitted but have not committed.
    fn spendable(&self, chain: ChainId, account: AccountId) -> u64 {
        let pending: u64 = self
            .transfers
            .iter()
            .filter(|t| t.src == chain && t.account == account && t.state == TransferState::Submitted)
            .map(|t| t.amount)
            .sum();
        self.balance(chain, account).saturating_sub(pending)
    }

    /// Start moving `amount` of `account` from shard `src` to shard `dst`.
    pub fn cross_shard_transfer(
        &mut self,
        src: ChainId,
        dst: ChainId,
        account: AccountId,
        amount: u64,
    ) -> Result<usize, ShardError> {
        for s in [src, dst] {
            if !self.shards.contains_key(&s) {
                return Err(ShardError::UnknownShard(s));
            }
        }
        if src == dst || amount == 0 {
            return Err(ShardError::BadInput("transfer needs two shards and a positive amount"));
        }
        let available = self.spendable(src, account);
        if available < amount {
            return Err(ShardError::InsufficientBalance {
                account,
                available,
                needed: amount,
            });
        }
        let payload = BridgeCall::Withdraw { dst_shard: dst }.encode().expect("fixed size");
        let tx = self.signed(src, account, AccountId::BRIDGE, amount, payload);
        let withdraw_digest = tx.digest();
        let withdraw = self.sim.inject(src, self.sim.now(), tx);
        self.transfers.push(Transfer {
            src,
            dst,
            account,
            amount,
            withdraw,
            withdraw_digest,
            reference: None,
            credit_digest: None,
            state: TransferState::Submitted,
        });
        Ok(self.transfers.len() - 1)
    }

    /// Advance simulated time by `dt`, then process what the reference nodes
    /// committed.
    pub fn advance(&mut self, dt: u64) -> Result<(), ShardError> {
        let t = self.sim.now() + dt;
        self.sim.run_until(t)?;
        self.sync();
        Ok(())
    }

    /// Submit credits that were held back.
    pub fn release_credits(&mut self) {
        self.hold_credits = false;
        self.sync();
    }

    fn sync(&mut self) {
        for chain in 0..self.cursors.len() as ChainId {
            let committed = self.sim.committed(chain);
            let fresh: Vec<_> = committed[self.cursors[chain as usize]..].to_vec();
            self.cursors[chain as usize] = committed.len();
            for c in fresh {
                let d = c.tx.digest();
                for t in self.transfers.iter_mut() {
                    if t.src == chain && t.state == TransferState::Submitted && t.withdraw_digest == d {
                        if c.outcome.is_success() {
                            t.state = TransferState::InFlight;
                            t.reference = Some(WithdrawRef {
                                src_shard: chain,
                                index: c.index,
                                slot: c.slot,
                                tx_digest: d,
                            });
                        } else {
                            t.state = TransferState::Aborted;
                        }
                    } else if t.dst == chain && t.state == TransferState::InFlight && t.credit_digest == Some(d) {
                        if c.outcome.is_success() {
                            t.state = TransferState::Completed;
                        } else {
                            // The bridge refused (already credited); the
                            // earlier credit closes the record.
                            t.credit_digest = None;
                        }
                    }
                }
            }
        }
        if self.hold_credits {
            return;
        }
        for i in 0..self.transfers.len() {
            let t = &self.transfers[i];
            if t.state != TransferState::InFlight || t.credit_digest.is_some() {
                continue;
            }
            let (dst, reference, beneficiary, amount) = (t.dst, t.reference.expect("in flight"), t.account, t.amount);
            let payload = BridgeCall::Credit {
                reference,
                beneficiary,
                amount,
            }
            .encode()
            .expect("fixed size");
            let relayer = AccountId(RELAYER_BASE + dst as u64);
            let tx = self.signed(dst, relayer, AccountId::BRIDGE, 0, payload);
            self.transfers[i].credit_digest = Some(tx.digest());
            self.sim.inject(dst, self.sim.now(), tx);
        }
    }

    pub fn conservation(&self) -> Conservation {
        let beacon = self.sim.reference(0).state();
        Conservation {
            beacon: beacon.total_balance_excluding(AccountId::ESCROW),
            escrow: beacon.account(AccountId::ESCROW).balance as u128,
            shards: self
                .shards
                .keys()
                .map(|c| self.sim.reference(*c).state().total_balance())
                .sum(),
            in_flight: self
                .transfers
                .iter()
                .filter(|t| t.state == TransferState::InFlight)
                .map(|t| t.amount as u128)
                .sum(),
            genesis: self.genesis_total,
            deposits: self
                .shards
                .values()
                .flat_map(|s| s.deposits.values())
                .map(|v| *v as u128)
                .sum(),
        }
    }

    pub fn check_conservation(&self) -> Result<Conservation, ShardError> {
        let c = self.conservation();
        if c.holds() {
            Ok(c)
        } else {
            Err(ShardError::Conservation(format!("{c:?}")))
        }
    }

    /// Message edges whose endpoints belong to different chains.
    pub fn cross_chain_edges(&self) -> u64 {
        let chain_of = |g: u32| {
            (0..self.sim.chain_count() as ChainId)
                .find(|c| self.sim.chain_members(*c).contains(&g))
                .expect("every node belongs to a chain")
        };
        self.sim
            .message_edges()
            .iter()
            .filter(|((a, b), _)| chain_of(*a) != chain_of(*b))
            .map(|(_, k)| *k)
            .sum()
    }
}

/// Informal wall-clock scaling: run `shards` independent copies of `cfg`
/// on separate threads and report aggregate committed transactions per
/// wall-clock second, next to a single copy. Machine dependent by nature.
pub fn wall_clock_scaling(cfg: &SimConfig, rate: u64, duration: u64, shards: usize) -> (f64, f64) {
    let run = |seed: u64| {
        let mut c = cfg.clone();
        c.seed = seed;
        let mut sim = Simulation::new(c).expect("valid config");
        let scheme = sim.scheme().clone();
        sim.load_workload(0, constant_rate(rate, duration, cfg.accounts, scheme.as_ref()));
        let _ = sim.run_to_budget();
        sim.metrics(0).committed
    };
    let start = Instant::now();
    let single = run(cfg.seed) as f64 / start.elapsed().as_secs_f64();
    let start = Instant::now();
    let total: u64 = std::thread::scope(|s| {
        let handles: Vec<_> = (0..shards as u64).map(|i| s.spawn(move || run(cfg.seed + i))).collect();
        handles.into_iter().map(|h| h.join().expect("shard thread")).sum()
    });
    (single, total as f64 / start.elapsed().as_secs_f64())
}
