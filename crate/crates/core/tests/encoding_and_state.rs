// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;
use std::sync::Arc;

use collachain_core::execution::apply_transaction;
use collachain_core::{
    digest_of, AccountId, Block, Canonical, ChainConfig, KeyedMac, NodeId, Superblock, Transaction,
    WorldState,
};
use proptest::prelude::*;
use sha2::{Digest as _, Sha256};

/// Tiny deterministic generator so the corpus is reproducible without a seed file.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 11
    }
}

fn random_tx(rng: &mut Lcg) -> Transaction {
    let recipient = if rng.next() % 4 == 0 { None } else { Some(AccountId(rng.next() % 16)) };
    let payload_len = (rng.next() % 24) as usize;
    let payload = (0..payload_len).map(|_| rng.next() as u8).collect();
    let mut tx = Transaction::unsigned(
        AccountId(rng.next() % 16),
        recipient,
        rng.next() % 8,
        rng.next() % 100,
        21 + rng.next() % 3,
        payload,
    );
    let sig_len = (rng.next() % 3) as usize * 16;
    tx.signature = (0..sig_len).map(|_| rng.next() as u8).collect();
    tx
}

#[test]
fn thousand_random_transactions_roundtrip_without_collisions() {
    let mut rng = Lcg(7);
    let mut seen_values = HashSet::new();
    let mut seen_encodings = HashSet::new();
    let mut failures = 0;
    for _ in 0..1000 {
        let tx = random_tx(&mut rng);
        let bytes = tx.canonical_encode().unwrap();
        if Transaction::canonical_decode(&bytes).ok().as_ref() != Some(&tx) {
            failures += 1;
        }
        // Distinct values must map to distinct encodings.
        if seen_values.insert(tx.clone()) {
            assert!(seen_encodings.insert(bytes), "collision for {tx:?}");
        }
    }
    assert_eq!(failures, 0);
    assert_eq!(seen_values.len(), seen_encodings.len());
}

#[test]
fn near_identical_blocks_have_distinct_digests() {
    let base: Vec<Transaction> = (0..5)
        .map(|i| Transaction::unsigned(AccountId(i), Some(AccountId(99)), 0, 10, 21, vec![]))
        .collect();
    let mut digests = HashSet::new();
    // 100 variants: each changes exactly one field of one transaction by one unit.
    for variant in 0..100u64 {
        let mut txs = base.clone();
        let slot = (variant % 5) as usize;
        match variant / 5 % 4 {
            0 => txs[slot].amount += 1 + variant / 20,
            1 => txs[slot].gas_limit += 1 + variant / 20,
            2 => txs[slot].payload = vec![variant as u8],
            _ => txs[slot].recipient = Some(AccountId(1000 + variant)),
        }
        let block = Block::proposal(NodeId(1), txs, 0).unwrap();
        let bytes = block.canonical_encode().unwrap();
        assert_eq!(digest_of(&bytes), digest_of(&block.canonical_encode().unwrap()));
        digests.insert(digest_of(&bytes));
    }
    assert_eq!(digests.len(), 100);
}

#[test]
fn superblock_roundtrip() {
    let mut rng = Lcg(3);
    let blocks = (0..3)
        .map(|p| {
            let txs = (0..4).map(|_| random_tx(&mut rng)).collect();
            Arc::new(Block::proposal_sorting(NodeId(p * 2), txs, 5))
        })
        .collect();
    let sb = Superblock::new(9, blocks).unwrap();
    let bytes = sb.canonical_encode().unwrap();
    assert_eq!(Superblock::canonical_decode(&bytes).unwrap(), sb);
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(Superblock::canonical_decode(&trailing).is_err());
}

/// Independent serializer for the state digest, written from the documented
/// layout rather than through the crate's codec.
fn oracle_state_digest(
    height: u64,
    accounts: &[(u64, u64, u64)],
    payloads: &[(u64, u64, &[u8])],
) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(height.to_le_bytes());
    h.update((accounts.len() as u32).to_le_bytes());
    for (id, bal, nonce) in accounts {
        h.update(id.to_le_bytes());
        h.update(bal.to_le_bytes());
        h.update(nonce.to_le_bytes());
    }
    h.update((payloads.len() as u32).to_le_bytes());
    for (id, nonce, bytes) in payloads {
        h.update(id.to_le_bytes());
        h.update(nonce.to_le_bytes());
        h.update((bytes.len() as u32).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().into()
}

#[test]
fn message_post_state_digest_matches_replay_oracle() {
    let scheme = KeyedMac::default();
    let cfg = ChainConfig::default();
    let a = AccountId(1);
    let msg = vec![b'm'; 140];
    let s = WorldState::genesis([(a, 50)]);
    let tx = Transaction::unsigned(a, None, 0, 0, 21, msg.clone()).signed(&scheme);
    let (s, out) = apply_transaction(&s, &tx, &cfg).unwrap();
    assert!(out.is_success());
    assert_eq!(
        s.state_digest().0,
        oracle_state_digest(0, &[(1, 50, 1)], &[(1, 0, &msg)])
    );
}

fn arb_transfer() -> impl Strategy<Value = (u64, Option<u64>, u64, bool)> {
    (0u64..6, proptest::option::of(0u64..6), 0u64..40, any::<bool>())
}

proptest! {
    #[test]
    fn encoding_is_injective(a in arb_transfer(), b in arb_transfer(), pa in proptest::collection::vec(any::<u8>(), 0..8), pb in proptest::collection::vec(any::<u8>(), 0..8)) {
        let ta = Transaction::unsigned(AccountId(a.0), a.1.map(AccountId), a.2, a.2 * 3, 21, pa);
        let tb = Transaction::unsigned(AccountId(b.0), b.1.map(AccountId), b.2, b.2 * 3, 21, pb);
        let (ea, eb) = (ta.canonical_encode().unwrap(), tb.canonical_encode().unwrap());
        prop_assert_eq!(ta == tb, ea == eb);
        prop_assert_eq!(Transaction::canonical_decode(&ea).unwrap(), ta);
    }

    /// With a zero fee, any sequence of (possibly failing) executions keeps
    /// the total supply fixed, and replaying it yields the same digest.
    #[test]
    fn conservation_and_determinism(ops in proptest::collection::vec(arb_transfer(), 1..60)) {
        let cfg = ChainConfig::default();
        let genesis = WorldState::genesis((0..6).map(|i| (AccountId(i), 50)));
        let total = genesis.total_balance();
        let run = || {
            let mut s = genesis.clone();
            for (sender, recipient, amount, fault) in &ops {
                let sender = AccountId(*sender);
                let nonce = s.account(sender).nonce;
                let payload = if *fault { b"\xffFAULT".to_vec() } else { vec![] };
                let tx = Transaction::unsigned(sender, recipient.map(AccountId), nonce, *amount, 21, payload);
                s = apply_transaction(&s, &tx, &cfg).unwrap().0;
            }
            s
        };
        let s1 = run();
        prop_assert_eq!(s1.total_balance(), total);
        prop_assert_eq!(run().state_digest(), s1.state_digest());
    }
}
