// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Protocol properties under seeded random schedules, plus a bounded
//! exhaustive search of reliable broadcast with an equivocating sender.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use collachain_consensus::rbc::{RbInstance, RbKey, RbMessage};
use collachain_consensus::{
    expand_targets, BcMessage, BinValues, BinaryAgreement, ConsensusMessage, ConsensusNode,
    NodeConfig, Quorums, Target, TimerId,
};
use collachain_core::{AccountId, Block, Digest, NodeId, Superblock, Transaction};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn block(proposer: u32, tag: u64) -> Arc<Block> {
    let tx = Transaction::unsigned(AccountId(100 + tag), None, 0, 0, 21, vec![tag as u8]);
    Arc::new(Block::proposal(NodeId(proposer), vec![tx], tag).unwrap())
}

// ---------------------------------------------------------------------------
// Binary agreement

enum BcEvent {
    Msg(NodeId, NodeId, BcMessage),
    Timer(NodeId, u64),
}

/// Runs one binary agreement with node `n - 1` byzantine when `byz` is set.
/// Pending events are delivered in random order; timers are picked with low
/// probability so coordinators usually win.
fn run_bc(n: usize, f: usize, byz: bool, proposals: &[bool], seed: u64) -> Vec<Option<bool>> {
    let q = Quorums::new(n, f);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let correct = if byz { n - f } else { n };
    let mut nodes: Vec<_> = (0..correct)
        .map(|i| BinaryAgreement::new(q, NodeId::from(i), 10))
        .collect();
    let mut pending: Vec<BcEvent> = Vec::new();
    let push = |pending: &mut Vec<BcEvent>, from: usize, out: collachain_consensus::BcOutput| {
        for m in out.broadcast {
            for to in 0..n {
                pending.push(BcEvent::Msg(NodeId::from(from), NodeId::from(to), m));
            }
        }
        for (round, _) in out.timers {
            pending.push(BcEvent::Timer(NodeId::from(from), round));
        }
    };
    for i in 0..correct {
        let out = nodes[i].propose(proposals[i]).unwrap();
        push(&mut pending, i, out);
    }
    let mut steps = 0;
    while !pending.is_empty() && steps < 400_000 {
        steps += 1;
        if nodes.iter().all(|b| b.decided().is_some()) && steps % 64 == 0 {
            break;
        }
        let pick = loop {
            let k = rng.gen_range(0..pending.len());
            if matches!(pending[k], BcEvent::Msg(..)) || rng.gen_ratio(1, 20) {
                break k;
            }
        };
        match pending.swap_remove(pick) {
            BcEvent::Timer(at, round) => {
                let out = nodes[at.index()].on_timeout(round);
                push(&mut pending, at.index(), out);
            }
            BcEvent::Msg(from, to, m) => {
                if to.index() >= correct {
                    // The byzantine node answers every message with noise.
                    let r = m.round();
                    let noise = match rng.gen_range(0..3) {
                        0 => BcMessage::Est { round: r, value: rng.gen() },
                        1 => BcMessage::Aux {
                            round: r,
                            values: BinValues::from_mask(rng.gen_range(1..=3)).unwrap(),
                        },
                        _ => BcMessage::Coord { round: r, value: rng.gen() },
                    };
                    for dst in 0..correct {
                        pending.push(BcEvent::Msg(to, NodeId::from(dst), noise));
                    }
                    continue;
                }
                let out = nodes[to.index()].handle(from, m);
                push(&mut pending, to.index(), out);
            }
        }
    }
    nodes.iter().map(|b| b.decided()).collect()
}

#[test]
fn binary_agreement_agreement_validity_termination() {
    for seed in 0..300u64 {
        for &(n, f) in &[(4, 1), (7, 2)] {
            let byz = seed % 2 == 0;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb17);
            let proposals: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let decided = run_bc(n, f, byz, &proposals, seed);
            let first = decided[0].unwrap_or_else(|| panic!("seed {seed} n {n}: no decision"));
            assert!(decided.iter().all(|d| *d == Some(first)), "seed {seed}: {decided:?}");
            let correct = decided.len();
            assert!(proposals[..correct].contains(&first), "seed {seed}: invalid value");
        }
    }
}

#[test]
fn unanimous_correct_proposals_decide_that_value() {
    for seed in 0..50u64 {
        for v in [false, true] {
            let decided = run_bc(4, 1, true, &[v; 4], seed);
            assert!(decided.iter().all(|d| *d == Some(v)));
        }
    }
}

// ---------------------------------------------------------------------------
// Reliable broadcast with an equivocating broadcaster (node 0)

type RbPending = Vec<(NodeId, NodeId, RbMessage)>;

fn rb_setup() -> (Vec<RbInstance>, RbPending, Arc<Block>, Arc<Block>) {
    let q = Quorums::new(4, 1);
    let key = RbKey {
        index: 0,
        broadcaster: NodeId(0),
    };
    let nodes = (0..4).map(|_| RbInstance::new(key, q)).collect();
    let a = block(0, 1);
    let b = block(0, 2);
    let (da, db) = (a.proposal_digest(), b.proposal_digest());
    let byz = NodeId(0);
    let mut pending: RbPending = vec![
        (byz, NodeId(1), RbMessage::Init(a.clone())),
        (byz, NodeId(2), RbMessage::Init(a.clone())),
        (byz, NodeId(3), RbMessage::Init(b.clone())),
        (byz, NodeId(3), RbMessage::Echo(db)),
        (byz, NodeId(3), RbMessage::Ready(db)),
    ];
    for to in 1..4 {
        pending.push((byz, NodeId(to), RbMessage::Echo(da)));
        pending.push((byz, NodeId(to), RbMessage::Ready(da)));
    }
    (nodes, pending, a, b)
}

fn rb_deliver(nodes: &mut [RbInstance], pending: &mut RbPending, k: usize) {
    let (from, to, msg) = pending.remove(k);
    if to.index() == 0 {
        return;
    }
    let out = nodes[to.index()].handle(from, msg);
    for (target, m) in out.send {
        match target {
            Target::All => pending.extend((0..4).map(|i| (to, NodeId::from(i), m.clone()))),
            Target::Node(dst) => pending.push((to, dst, m)),
        }
    }
}

fn rb_check(nodes: &[RbInstance]) -> Result<Option<Digest>, String> {
    let delivered: Vec<Option<Digest>> = nodes[1..]
        .iter()
        .map(|n| n.delivered().map(|b| b.proposal_digest()))
        .collect();
    let some: HashSet<_> = delivered.iter().flatten().collect();
    if some.len() > 1 {
        return Err(format!("conflicting deliveries {delivered:?}"));
    }
    Ok(delivered.iter().flatten().next().copied())
}

fn state_hash(nodes: &[RbInstance], pending: &RbPending) -> u64 {
    let mut items: Vec<u64> = pending
        .iter()
        .map(|p| {
            let mut h = DefaultHasher::new();
            p.hash(&mut h);
            h.finish()
        })
        .collect();
    items.sort_unstable();
    let mut h = DefaultHasher::new();
    nodes.hash(&mut h);
    items.hash(&mut h);
    h.finish()
}

/// Completes a run with FIFO delivery and checks totality on quiescence.
fn rb_finish(mut nodes: Vec<RbInstance>, mut pending: RbPending) -> Result<(), String> {
    while !pending.is_empty() {
        rb_deliver(&mut nodes, &mut pending, 0);
        rb_check(&nodes)?;
    }
    let n_delivered = nodes[1..].iter().filter(|n| n.delivered().is_some()).count();
    if n_delivered != 0 && n_delivered != 3 {
        return Err(format!("totality: {n_delivered} of 3 delivered"));
    }
    Ok(())
}

fn rb_explore(
    nodes: &[RbInstance],
    pending: &RbPending,
    depth: usize,
    seen: &mut HashSet<u64>,
    leaves: &mut usize,
) -> Result<(), String> {
    if !seen.insert(state_hash(nodes, pending)) {
        return Ok(());
    }
    if depth == 0 || pending.is_empty() {
        *leaves += 1;
        return rb_finish(nodes.to_vec(), pending.clone());
    }
    for k in 0..pending.len() {
        let mut n2 = nodes.to_vec();
        let mut p2 = pending.clone();
        rb_deliver(&mut n2, &mut p2, k);
        rb_check(&n2)?;
        rb_explore(&n2, &p2, depth - 1, seen, leaves)?;
    }
    Ok(())
}

#[test]
fn rb_equivocation_bounded_exhaustive() {
    let (nodes, pending, _, _) = rb_setup();
    let mut seen = HashSet::new();
    let mut leaves = 0;
    rb_explore(&nodes, &pending, 10, &mut seen, &mut leaves).unwrap();
    assert!(leaves > 1000, "explored only {leaves} leaves");
}

#[test]
fn rb_equivocation_random_schedules_deliver_the_majority_payload() {
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut nodes, mut pending, a, _) = rb_setup();
        while !pending.is_empty() {
            let k = rng.gen_range(0..pending.len());
            rb_deliver(&mut nodes, &mut pending, k);
            rb_check(&nodes).unwrap();
        }
        // Nodes 1 and 2 plus the byzantine echo form an echo quorum for A.
        for n in &nodes[1..] {
            assert_eq!(n.delivered(), Some(&a), "seed {seed}");
        }
    }
}

// ---------------------------------------------------------------------------
// Superblock reduction over full consensus nodes

struct Cluster {
    n: usize,
    nodes: Vec<ConsensusNode>,
    silent: HashSet<usize>,
    /// Ordered by delivery time, then sequence number.
    events: BTreeMap<(u64, u64), Ev>,
    seq: u64,
    now: u64,
    committed: Vec<Vec<Superblock>>,
}

enum Ev {
    Msg(NodeId, NodeId, ConsensusMessage),
    Timer(NodeId, TimerId),
}

impl Cluster {
    fn new(n: usize, f: usize, silent: &[usize]) -> Self {
        let q = Quorums::new(n, f);
        let cfg = NodeConfig {
            timeout_base: 40,
            ..NodeConfig::default()
        };
        Self {
            n,
            nodes: (0..n).map(|i| ConsensusNode::new(NodeId::from(i), q, cfg)).collect(),
            silent: silent.iter().copied().collect(),
            events: BTreeMap::new(),
            seq: 0,
            now: 0,
            committed: vec![Vec::new(); n],
        }
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.seq += 1;
        self.events.insert((at, self.seq), ev);
    }

    fn absorb(&mut self, me: usize, step: collachain_consensus::NodeStep, rng: &mut ChaCha8Rng) {
        self.committed[me].extend(step.committed);
        for (to, msg) in expand_targets(self.n, step.send) {
            let delay = if to.index() == me { 0 } else { rng.gen_range(1..=10) };
            self.schedule(self.now + delay, Ev::Msg(NodeId::from(me), to, msg));
        }
        for (t, delay) in step.timers {
            self.schedule(self.now + delay, Ev::Timer(NodeId::from(me), t));
        }
    }

    fn submit(&mut self, i: usize, b: Arc<Block>, rng: &mut ChaCha8Rng) {
        if self.silent.contains(&i) {
            return;
        }
        let step = self.nodes[i].submit(b);
        self.absorb(i, step, rng);
    }

    fn run(&mut self, rng: &mut ChaCha8Rng, until_index: u64) {
        while let Some(((at, _), ev)) = self.events.pop_first() {
            self.now = at;
            let (me, step) = match ev {
                Ev::Msg(from, to, msg) => {
                    if self.silent.contains(&to.index()) {
                        continue;
                    }
                    (to.index(), self.nodes[to.index()].handle(from, msg))
                }
                Ev::Timer(at, t) => (at.index(), self.nodes[at.index()].on_timer(t)),
            };
            self.absorb(me, step, rng);
            let done = (0..self.n)
                .filter(|i| !self.silent.contains(i))
                .all(|i| self.nodes[i].next_commit() >= until_index);
            if done {
                break;
            }
        }
    }
}

#[test]
fn superblock_single_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut c = Cluster::new(1, 0, &[]);
    c.submit(0, block(0, 7), &mut rng);
    c.run(&mut rng, 1);
    assert_eq!(c.committed[0].len(), 1);
    assert_eq!(c.committed[0][0].blocks(), &[block(0, 7)]);
}

#[test]
fn superblock_all_correct_includes_every_block_in_slot_order() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Cluster::new(4, 1, &[]);
        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(&mut rng);
        for i in order {
            c.submit(i, block(i as u32, i as u64), &mut rng);
        }
        c.run(&mut rng, 1);
        let sb = &c.committed[0][0];
        let expect: Vec<_> = (0..4).map(|i| block(i, i as u64)).collect();
        assert_eq!(sb.blocks(), expect.as_slice(), "seed {seed}");
        assert!(c.committed.iter().all(|s| s[0] == *sb));
    }
}

#[test]
fn superblock_with_silent_byzantine_node() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Cluster::new(4, 1, &[3]);
        for i in 0..3 {
            c.submit(i, block(i as u32, i as u64), &mut rng);
        }
        c.run(&mut rng, 1);
        let sb = &c.committed[0][0];
        let proposers: Vec<u32> = sb.blocks().iter().map(|b| b.proposer().0).collect();
        assert_eq!(proposers, vec![0, 1, 2], "seed {seed}");
        assert!((0..3).all(|i| c.committed[i][0] == *sb));
    }
}

#[test]
fn many_indices_commit_identically_with_f_silent() {
    for &(n, f) in &[(4usize, 1usize), (7, 2), (10, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let silent: Vec<usize> = (n - f..n).collect();
        let mut c = Cluster::new(n, f, &silent);
        for round in 0..5u64 {
            for i in 0..n - f {
                c.submit(i, block(i as u32, round * 100 + i as u64), &mut rng);
            }
        }
        c.run(&mut rng, 5);
        for i in 0..n - f {
            assert_eq!(c.committed[i][..5], c.committed[0][..5], "n={n}");
        }
        for sb in &c.committed[0] {
            assert!(sb.len() >= n - f, "n={n}: cardinality {}", sb.len());
        }
    }
}

#[test]
fn wire_messages_roundtrip_through_a_full_run() {
    // Every message a real run produces survives the wire codec.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut c = Cluster::new(4, 1, &[]);
    for i in 0..4 {
        c.submit(i, block(i as u32, i as u64), &mut rng);
    }
    let mut queue: VecDeque<_> = c.events.values().filter_map(|e| match e {
        Ev::Msg(_, _, m) => Some(m.clone()),
        Ev::Timer(..) => None,
    }).collect();
    while let Some(m) = queue.pop_front() {
        let bytes = m.encode().unwrap();
        assert_eq!(ConsensusMessage::decode(&bytes).unwrap(), m);
    }
}
