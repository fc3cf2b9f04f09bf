// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use collachain_core::{AccountId, Block, ChainConfig, KeyedMac, NodeId, Superblock, Transaction, WorldState};
use collachain_node::{
    CommitMode, CommitteeRegistry, CommitteeSchedule, Contracts, MembershipCall, MembershipContract,
    MembershipError, StateNode,
};
use proptest::prelude::*;

const CHAIR: AccountId = AccountId(100);

fn endpoints(size: usize) -> Vec<String> {
    (0..size).map(|i| format!("node{i}.example:5000")).collect()
}

fn registry(size: usize, member: usize) -> CommitteeRegistry {
    let mut r = CommitteeRegistry::new(CHAIR);
    r.add_participants(CHAIR, endpoints(size), member, (0..size as u64).map(AccountId).collect())
        .unwrap();
    r
}

#[test]
fn golden_nine_three_seed_four() {
    let mut r = registry(9, 3);
    assert_eq!(r.threshold(), 3);
    assert_eq!(r.rotate_vote(AccountId(0), 4), Ok(None));
    assert_eq!(r.rotate_vote(AccountId(5), 4), Ok(None));
    let got = r.rotate_vote(AccountId(7), 4).unwrap().unwrap();
    assert_eq!(got, endpoints(9)[3..6].to_vec());
    // Flags and tallies reset after selection.
    assert_eq!(r.tally(4), 0);
    assert!(endpoints(9).iter().all(|e| !r.has_called(e)));
}

#[test]
fn golden_nine_three_seed_zero() {
    let mut r = registry(9, 3);
    for w in 0..2 {
        assert_eq!(r.rotate_vote(AccountId(w), 0), Ok(None));
    }
    assert_eq!(r.rotate_vote(AccountId(2), 0).unwrap().unwrap(), endpoints(9)[0..3].to_vec());
}

#[test]
fn golden_double_vote_rejected() {
    let mut r = registry(9, 3);
    r.rotate_vote(AccountId(1), 4).unwrap();
    let before = r.clone();
    assert!(matches!(r.rotate_vote(AccountId(1), 4), Err(MembershipError::Rejected(_))));
    assert!(matches!(r.rotate_vote(AccountId(1), 2), Err(MembershipError::Rejected(_))));
    assert_eq!(r, before);
    assert_eq!(r.tally(4), 1);
}

#[test]
fn unregistered_caller_rejected() {
    let mut r = registry(9, 3);
    assert!(matches!(r.rotate_vote(AccountId(55), 1), Err(MembershipError::Rejected(_))));
}

/// Straight transcription of the selection arithmetic over a vote sequence.
fn oracle(size: usize, member: usize, votes: &[(u64, u8)]) -> Vec<Vec<String>> {
    let eps = endpoints(size);
    let threshold = (size - 1) / 3 + 1;
    let mut tally = [0usize; 10];
    let mut called = vec![false; size];
    let mut out = Vec::new();
    for &(w, val) in votes {
        let w = w as usize;
        if w >= size || called[w] || val > 9 {
            continue;
        }
        called[w] = true;
        tally[val as usize] += 1;
        if tally[val as usize] == threshold {
            let select = size / member;
            let option = val as usize % select;
            out.push(eps[option * member..(option + 1) * member].to_vec());
            tally = [0; 10];
            called = vec![false; size];
        }
    }
    out
}

fn chain_node(id: u32) -> StateNode {
    let genesis = WorldState::genesis((0..20).map(|i| (AccountId(i), 10)).chain([(CHAIR, 10)]));
    let contracts = Contracts {
        membership: Some(MembershipContract::new(CHAIR)),
        ..Contracts::default()
    };
    StateNode::in_memory(
        NodeId(id),
        ChainConfig::for_nodes(4),
        Arc::new(KeyedMac::default()),
        genesis,
        CommitMode::PerBlock,
    )
    .with_contracts(contracts)
    .with_schedule(CommitteeSchedule::new(vec!["genesis".into()]))
}

fn call_tx(sender: AccountId, nonce: u64, call: &MembershipCall) -> Transaction {
    Transaction::unsigned(sender, Some(AccountId::MEMBERSHIP), nonce, 0, 21, call.encode().unwrap())
        .signed(&KeyedMac::default())
}

/// Commit registration then one vote per superblock (or `batch` per block).
fn run_votes(node: &mut StateNode, size: usize, member: usize, votes: &[(u64, u8)], batch: usize) {
    let reg = MembershipCall::AddParticipants {
        member: member as u32,
        participants: (0..size as u64).map(AccountId).zip(endpoints(size)).collect(),
    };
    let b = Block::proposal(NodeId(0), vec![call_tx(CHAIR, 0, &reg)], 0).unwrap();
    node.commit_superblock(&Superblock::new(0, vec![Arc::new(b)]).unwrap()).unwrap();
    let mut nonces = vec![0u64; 20];
    for chunk in votes.chunks(batch.max(1)) {
        // One block per vote, so repeated voters keep their order.
        let blocks: Vec<_> = chunk
            .iter()
            .enumerate()
            .map(|(slot, &(w, val))| {
                let t = call_tx(AccountId(w), nonces[w as usize], &MembershipCall::Vote(val));
                nonces[w as usize] += 1;
                Arc::new(Block::proposal(NodeId(slot as u32), vec![t], 0).unwrap())
            })
            .collect();
        let sb = Superblock::new(node.height(), blocks).unwrap();
        node.commit_superblock(&sb).unwrap();
    }
}

#[test]
fn committed_votes_select_the_golden_slice_and_switch_at_next_index() {
    let mut n = chain_node(0);
    run_votes(&mut n, 9, 3, &[(0, 4), (5, 4), (7, 4)], 1);
    let m = n.contracts().membership.as_ref().unwrap();
    assert_eq!(m.selections, vec![endpoints(9)[3..6].to_vec()]);
    // The third vote committed at index 3; the committee applies from 4.
    let s = n.schedule().unwrap();
    assert_eq!(s.committee_at(3), Some(&["genesis".to_string()][..]));
    assert_eq!(s.committee_at(4), Some(&endpoints(9)[3..6]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_is_a_pure_function_of_committed_votes(
        size in 4usize..13,
        member_frac in 1usize..4,
        votes in prop::collection::vec((0u64..13, 0u8..10), 0..40),
        batch in 1usize..4,
    ) {
        let member = (size / member_frac).max(1);
        let votes: Vec<(u64, u8)> = votes.into_iter().filter(|(w, _)| (*w as usize) < size).collect();
        let expected = oracle(size, member, &votes);

        let mut a = chain_node(0);
        let mut b = chain_node(1);
        run_votes(&mut a, size, member, &votes, 1);
        run_votes(&mut b, size, member, &votes, batch);
        let sa = &a.contracts().membership.as_ref().unwrap().selections;
        let sb = &b.contracts().membership.as_ref().unwrap().selections;
        prop_assert_eq!(sa, &expected);
        prop_assert_eq!(sb, &expected);
        for c in sa {
            prop_assert_eq!(c.len(), member);
        }
    }
}
