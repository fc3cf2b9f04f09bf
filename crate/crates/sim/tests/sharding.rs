// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use collachain_core::AccountId;
use collachain_sim::sharding::{ShardDirectory, ShardError, TransferState};
use collachain_sim::SimConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A: AccountId = AccountId(1);
const B: AccountId = AccountId(2);
const SPAWN_DEADLINE: u64 = 5_000_000;

fn directory(seed: u64) -> ShardDirectory {
    let mut cfg = SimConfig::for_nodes(4);
    cfg.seed = seed;
    cfg.accounts = 8;
    cfg.genesis_balance = 1_000;
    cfg.chain.proposal_threshold = 10;
    ShardDirectory::new(cfg, 4).unwrap()
}

fn deposits(pairs: &[(AccountId, u64)]) -> BTreeMap<AccountId, u64> {
    pairs.iter().copied().collect()
}

/// Advance until no transfer is waiting, checking conservation at every step.
fn settle(dir: &mut ShardDirectory) {
    for _ in 0..2_000 {
        dir.check_conservation().unwrap();
        if dir.transfers().iter().all(|t| matches!(t.state, TransferState::Completed | TransferState::Aborted)) {
            return;
        }
        dir.advance(20_000).unwrap();
    }
    panic!("transfers did not settle: {:?}", dir.transfers());
}

#[test]
fn spawn_escrows_deposits() {
    let mut dir = directory(1);
    let shard = dir.spawn_shard(deposits(&[(A, 10), (B, 5)]), SPAWN_DEADLINE).unwrap();
    assert_eq!(dir.balance(shard, A), 10);
    assert_eq!(dir.balance(shard, B), 5);
    assert_eq!(dir.balance(0, A), 990);
    assert_eq!(dir.balance(0, B), 995);
    assert_eq!(dir.balance(0, AccountId::ESCROW), 15);
    dir.check_conservation().unwrap();
}

#[test]
fn over_deposit_changes_nothing() {
    let mut dir = directory(2);
    let before: Vec<_> = [A, B].iter().map(|a| dir.simulation().reference(0).state().account(*a)).collect();
    let err = dir.spawn_shard(deposits(&[(A, 10), (B, 1_001)]), SPAWN_DEADLINE).unwrap_err();
    assert!(matches!(err, ShardError::InsufficientBalance { account: B, .. }), "{err}");
    dir.advance(1_000_000).unwrap();
    let after: Vec<_> = [A, B].iter().map(|a| dir.simulation().reference(0).state().account(*a)).collect();
    assert_eq!(before, after);
    assert!(dir.shards().is_empty());
    assert!(matches!(dir.spawn_shard(BTreeMap::new(), SPAWN_DEADLINE), Err(ShardError::BadInput(_))));
}

#[test]
fn transfer_moves_value_between_shards() {
    let mut dir = directory(3);
    let s1 = dir.spawn_shard(deposits(&[(A, 10)]), SPAWN_DEADLINE).unwrap();
    let s2 = dir.spawn_shard(deposits(&[(B, 5)]), SPAWN_DEADLINE).unwrap();
    dir.cross_shard_transfer(s1, s2, A, 3).unwrap();
    settle(&mut dir);
    assert_eq!(dir.balance(s1, A), 7);
    assert_eq!(dir.balance(s2, A), 3);
    let c = dir.check_conservation().unwrap();
    assert_eq!(c.in_flight, 0);
}

#[test]
fn delayed_credit_is_counted_in_flight() {
    let mut dir = directory(4);
    let s1 = dir.spawn_shard(deposits(&[(A, 10)]), SPAWN_DEADLINE).unwrap();
    let s2 = dir.spawn_shard(deposits(&[(B, 5)]), SPAWN_DEADLINE).unwrap();
    dir.hold_credits = true;
    dir.cross_shard_transfer(s1, s2, A, 3).unwrap();
    while dir.transfers()[0].state == TransferState::Submitted {
        dir.advance(20_000).unwrap();
        dir.check_conservation().unwrap();
    }
    dir.advance(2_000_000).unwrap();
    let c = dir.check_conservation().unwrap();
    assert_eq!(c.in_flight, 3);
    assert_eq!(c.shards, 15 - 3);
    assert_eq!(dir.transfers()[0].state, TransferState::InFlight);
    dir.release_credits();
    settle(&mut dir);
    assert_eq!(dir.balance(s2, A), 3);
}

#[test]
fn overdraft_creates_no_record() {
    let mut dir = directory(5);
    let s1 = dir.spawn_shard(deposits(&[(A, 10)]), SPAWN_DEADLINE).unwrap();
    let s2 = dir.spawn_shard(deposits(&[(B, 5)]), SPAWN_DEADLINE).unwrap();
    let err = dir.cross_shard_transfer(s1, s2, A, 11).unwrap_err();
    assert!(matches!(err, ShardError::InsufficientBalance { .. }));
    assert!(dir.transfers().is_empty());
    dir.check_conservation().unwrap();
}

#[test]
fn shards_exchange_no_messages() {
    let mut dir = directory(6);
    let s1 = dir.spawn_shard(deposits(&[(A, 100), (B, 100)]), SPAWN_DEADLINE).unwrap();
    let s2 = dir.spawn_shard(deposits(&[(A, 100), (B, 100)]), SPAWN_DEADLINE).unwrap();
    for k in 0..6 {
        let (src, dst) = if k % 2 == 0 { (s1, s2) } else { (s2, s1) };
        dir.cross_shard_transfer(src, dst, if k % 3 == 0 { A } else { B }, 7).unwrap();
        dir.advance(30_000).unwrap();
    }
    settle(&mut dir);
    let sim = dir.simulation();
    let within: u64 = sim.message_edges().values().sum();
    assert!(within > 0);
    assert_eq!(dir.cross_chain_edges(), 0);
    for s in [s1, s2] {
        let members = sim.chain_members(s);
        assert!(sim.message_edges().keys().any(|(a, _)| members.contains(a)));
    }
}

#[test]
fn random_schedules_conserve_value() {
    for seed in 0..12 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dir = directory(100 + seed);
        let shards: Vec<_> = (0..2)
            .map(|_| {
                let d = (0..4).map(|a| (AccountId(a), rng.gen_range(1..200))).collect();
                dir.spawn_shard(d, SPAWN_DEADLINE).unwrap()
            })
            .collect();
        for _ in 0..10 {
            let src = shards[rng.gen_range(0..2)];
            let dst = shards.iter().copied().find(|s| *s != src).unwrap();
            let account = AccountId(rng.gen_range(0..4));
            let amount = rng.gen_range(1..80);
            let _ = dir.cross_shard_transfer(src, dst, account, amount);
            dir.advance(rng.gen_range(0..60_000)).unwrap();
            dir.check_conservation().unwrap();
        }
        settle(&mut dir);
        assert_eq!(dir.cross_chain_edges(), 0);
    }
}
