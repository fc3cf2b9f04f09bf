// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! The discrete-event simulator.
//!
//! Each simulated node pairs a [`ConsensusNode`] with a [`StateNode`].
//! Superblocks released by consensus enter a per-node commit pipeline whose
//! cost follows [`PipelineCost`]; a correct node builds its next block as
//! soon as its previous one is included. Several independent chains can share
//! one simulator (and one clock), which is how shards are run.
//!
//! Everything is driven by one seeded RNG and a totally ordered event queue,
//! so a configuration and workload fully determine the trace.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use collachain_consensus::{
    expand_targets, ConsensusMessage, ConsensusNode, NodeConfig, NodeStep, Quorums, TimerId,
};
use collachain_core::{
    Account, AccountId, Block, ChainConfig, Digest, ExecOutcome, KeyedMac, NodeId, SignatureScheme,
    Superblock, Transaction, WorldState,
};
use collachain_node::{
    quorum_value, CommitMode, Contracts, DropReason, ReadError, ReadKey, ReadResponse, ReadService, ReadValue,
    StateNode,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{mutate, AdversaryKind};
use crate::config::{ConfigError, PipelineCost, Routing, SimConfig};
use crate::metrics::{throughput_series, RunMetrics};
use crate::monitor::{ChainMonitor, Violation, ViolationKind};
use crate::network::Network;
use crate::trace::{fingerprint, Trace, TraceEntry, TraceEvent};
use crate::workload::{generate_workload, WorkloadError, WorkloadTx};

pub type ChainId = u32;
pub type TxId = usize;

/// Everything that defines one chain.
#[derive(Debug, Clone)]
pub struct ChainSetup {
    pub n: usize,
    pub f: usize,
    pub adversaries: BTreeMap<u32, AdversaryKind>,
    pub chain: ChainConfig,
    pub genesis: WorldState,
    pub contracts: Contracts,
    pub commit_mode: CommitMode,
}

impl ChainSetup {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            n: cfg.n,
            f: cfg.f,
            adversaries: cfg.adversaries.clone(),
            chain: cfg.chain.clone(),
            genesis: WorldState::genesis((0..cfg.accounts).map(|a| (AccountId(a), cfg.genesis_balance))),
            contracts: Contracts::default(),
            commit_mode: cfg.commit_mode.into(),
        }
    }
}

/// A transaction committed at a chain's reference node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommittedTx {
    pub index: u64,
    pub slot: NodeId,
    pub tx: Transaction,
    pub outcome: ExecOutcome,
    pub at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    Pending,
    Committed,
    Dropped(DropReason),
}

#[derive(Debug, Clone)]
struct TxTrack {
    chain: ChainId,
    tx: Transaction,
    submitted_at: u64,
    targets: usize,
    rejections: usize,
    first_reject: Option<DropReason>,
    /// Node that pooled it and the consensus index it was pooled at.
    home: Option<(usize, u64)>,
    status: TxStatus,
}

#[derive(Debug)]
enum Event {
    Deliver {
        chain: ChainId,
        from: NodeId,
        to: NodeId,
        msg: ConsensusMessage,
    },
    Timer {
        chain: ChainId,
        node: NodeId,
        timer: TimerId,
    },
    Submit {
        chain: ChainId,
        node: NodeId,
        tx: TxId,
    },
    PipelineDone {
        chain: ChainId,
        node: NodeId,
    },
    Read {
        chain: ChainId,
    },
}

struct SimNode {
    adversary: Option<AdversaryKind>,
    consensus: ConsensusNode,
    state: StateNode,
    pipeline: VecDeque<Superblock>,
    busy: bool,
    junk: u64,
}

struct Chain {
    base: u32,
    setup: ChainSetup,
    nodes: Vec<SimNode>,
    correct: Vec<usize>,
    monitor: ChainMonitor,
    committed: Vec<CommittedTx>,
    cardinality: Vec<usize>,
}

impl Chain {
    fn reference(&self) -> usize {
        self.correct[0]
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: RunMetrics,
    pub trace_digest: Digest,
    pub trace: Vec<TraceEntry>,
}

pub struct Simulation {
    cfg: SimConfig,
    scheme: Arc<dyn SignatureScheme>,
    network: Network,
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    events: u64,
    queue: BTreeMap<(u64, u64), Event>,
    chains: Vec<Chain>,
    txs: Vec<TxTrack>,
    by_digest: HashMap<(ChainId, Digest), TxId>,
    latencies: Vec<u64>,
    commit_times: Vec<u64>,
    max_lag: u64,
    messages: BTreeMap<&'static str, u64>,
    edges: BTreeMap<(u32, u32), u64>,
    trace: Trace,
}

impl Simulation {
    /// A simulator with one chain built from `cfg`.
    pub fn new(cfg: SimConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut sim = Self::empty(cfg);
        let setup = ChainSetup::from_config(&sim.cfg);
        sim.add_chain(setup);
        Ok(sim)
    }

    /// A simulator with no chains; network, timing and seed come from `cfg`.
    pub fn empty(cfg: SimConfig) -> Self {
        let mut sim = Self {
            scheme: Arc::new(KeyedMac::default()),
            network: Network::new(cfg.delay.clone(), cfg.gst),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            now: 0,
            seq: 0,
            events: 0,
            queue: BTreeMap::new(),
            chains: Vec::new(),
            txs: Vec::new(),
            by_digest: HashMap::new(),
            latencies: Vec::new(),
            commit_times: Vec::new(),
            max_lag: 0,
            messages: BTreeMap::new(),
            edges: BTreeMap::new(),
            trace: Trace::new(cfg.record_trace),
            cfg,
        };
        if let Some(every) = sim.cfg.read_interval.filter(|i| *i > 0) {
            let mut t = every;
            while t <= sim.cfg.duration {
                sim.schedule(t, Event::Read { chain: 0 });
                t += every;
            }
        }
        sim
    }

    pub fn scheme(&self) -> &Arc<dyn SignatureScheme> {
        &self.scheme
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Start a new chain at the current time.
    pub fn add_chain(&mut self, setup: ChainSetup) -> ChainId {
        let id = self.chains.len() as ChainId;
        let base = self.chains.iter().map(|c| c.nodes.len() as u32).sum();
        let quorums = Quorums::new(setup.n, setup.f);
        let node_cfg = NodeConfig {
            timeout_base: self.cfg.timeout_base,
            ..NodeConfig::default()
        };
        let nodes: Vec<SimNode> = (0..setup.n)
            .map(|i| {
                let me = NodeId::from(i);
                SimNode {
                    adversary: setup.adversaries.get(&(i as u32)).copied(),
                    consensus: ConsensusNode::new(me, quorums, node_cfg),
                    state: StateNode::in_memory(
                        me,
                        setup.chain.clone(),
                        self.scheme.clone(),
                        setup.genesis.clone(),
                        setup.commit_mode,
                    )
                    .with_contracts(setup.contracts.clone()),
                    pipeline: VecDeque::new(),
                    busy: false,
                    junk: 0,
                }
            })
            .collect();
        let correct = (0..setup.n).filter(|i| nodes[*i].adversary.is_none()).collect();
        let monitor = ChainMonitor::new(
            id,
            setup.n,
            setup.chain.clone(),
            self.scheme.clone(),
            setup.genesis.clone(),
            setup.contracts.clone(),
        );
        self.chains.push(Chain {
            base,
            setup,
            nodes,
            correct,
            monitor,
            committed: Vec::new(),
            cardinality: Vec::new(),
        });
        id
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }

    /// Global id of every node of `chain`.
    pub fn chain_members(&self, chain: ChainId) -> std::ops::Range<u32> {
        let c = &self.chains[chain as usize];
        c.base..c.base + c.nodes.len() as u32
    }

    /// Messages sent between pairs of nodes, by global id.
    pub fn message_edges(&self) -> &BTreeMap<(u32, u32), u64> {
        &self.edges
    }

    pub fn state_node(&self, chain: ChainId, node: usize) -> &StateNode {
        &self.chains[chain as usize].nodes[node].state
    }

    pub fn consensus_node(&self, chain: ChainId, node: usize) -> &ConsensusNode {
        &self.chains[chain as usize].nodes[node].consensus
    }

    /// The lowest-numbered correct node, whose view the metrics report.
    pub fn reference(&self, chain: ChainId) -> &StateNode {
        let c = &self.chains[chain as usize];
        &c.nodes[c.reference()].state
    }

    pub fn correct_nodes(&self, chain: ChainId) -> &[usize] {
        &self.chains[chain as usize].correct
    }

    /// Transactions committed at the reference node, in commit order.
    pub fn committed(&self, chain: ChainId) -> &[CommittedTx] {
        &self.chains[chain as usize].committed
    }

    pub fn tx_status(&self, tx: TxId) -> TxStatus {
        self.txs[tx].status
    }

    pub fn trace_digest(&self) -> Digest {
        self.trace.digest()
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.queue.insert((at, self.seq), ev);
        self.seq += 1;
    }

    /// Submit `tx` to `chain` at time `at`, routed by the configured policy.
    pub fn inject(&mut self, chain: ChainId, at: u64, tx: Transaction) -> TxId {
        let c = &self.chains[chain as usize];
        let home = tx.sender.0 as usize % c.correct.len();
        let targets: Vec<usize> = match self.cfg.routing {
            Routing::SenderAffine => vec![c.correct[home]],
            Routing::FanOut(k) => (0..k.min(c.correct.len()))
                .map(|j| c.correct[(home + j) % c.correct.len()])
                .collect(),
        };
        self.inject_to(chain, at, tx, &targets)
    }

    /// Submit `tx` to specific nodes of `chain`.
    pub fn inject_to(&mut self, chain: ChainId, at: u64, tx: Transaction, targets: &[usize]) -> TxId {
        let id = self.txs.len();
        self.by_digest.insert((chain, tx.digest()), id);
        self.txs.push(TxTrack {
            chain,
            tx,
            submitted_at: at,
            targets: targets.len(),
            rejections: 0,
            first_reject: None,
            home: None,
            status: TxStatus::Pending,
        });
        for t in targets {
            self.schedule(
                at.max(self.now),
                Event::Submit {
                    chain,
                    node: NodeId::from(*t),
                    tx: id,
                },
            );
        }
        id
    }

    pub fn load_workload(&mut self, chain: ChainId, stream: Vec<WorkloadTx>) {
        for w in stream {
            self.inject(chain, w.at, w.tx);
        }
    }

    fn record(&mut self, chain: ChainId, node: NodeId, event: TraceEvent) {
        self.trace.push(TraceEntry {
            at: self.now,
            chain,
            node: node.0,
            event,
        });
    }

    fn out_of_budget(&self) -> bool {
        self.events >= self.cfg.max_events
    }

    /// Process events up to and including time `t`. Returns whether events
    /// remain.
    pub fn run_until(&mut self, t: u64) -> Result<bool, Violation> {
        while !self.out_of_budget() {
            let Some(entry) = self.queue.first_entry() else {
                break;
            };
            if entry.key().0 > t {
                break;
            }
            let ((at, _), ev) = entry.remove_entry();
            self.now = at;
            self.events += 1;
            self.dispatch(ev).map_err(|mut v| {
                v.at = self.now;
                v
            })?;
        }
        if self.now < t && t != u64::MAX {
            self.now = t;
        }
        Ok(!self.queue.is_empty())
    }

    /// Run to the configured budget.
    pub fn run_to_budget(&mut self) -> Result<(), Violation> {
        self.run_until(self.cfg.duration).map(|_| ())
    }

    fn dispatch(&mut self, ev: Event) -> Result<(), Violation> {
        match ev {
            Event::Deliver { chain, from, to, msg } => {
                let kind = msg.kind();
                self.record(
                    chain,
                    to,
                    TraceEvent::Deliver {
                        from: from.0,
                        kind: kind.name(),
                        index: msg.index(),
                        tag: fingerprint(&msg),
                    },
                );
                let node = &mut self.chains[chain as usize].nodes[to.index()];
                if node.adversary == Some(AdversaryKind::Silent) {
                    return Ok(());
                }
                let step = node.consensus.handle(from, msg);
                self.apply(chain, to, step)?;
                self.maybe_propose(chain, to)
            }
            Event::Timer { chain, node, timer } => {
                self.record(
                    chain,
                    node,
                    TraceEvent::Timer {
                        index: timer.index,
                        slot: timer.slot.0,
                        round: timer.round,
                    },
                );
                let step = self.chains[chain as usize].nodes[node.index()].consensus.on_timer(timer);
                self.apply(chain, node, step)?;
                self.maybe_propose(chain, node)
            }
            Event::Submit { chain, node, tx } => self.on_submit(chain, node, tx),
            Event::PipelineDone { chain, node } => self.on_pipeline_done(chain, node),
            Event::Read { chain } => self.on_read(chain),
        }
    }

    fn on_submit(&mut self, chain: ChainId, node: NodeId, id: TxId) -> Result<(), Violation> {
        let tx = self.txs[id].tx.clone();
        let sim_node = &mut self.chains[chain as usize].nodes[node.index()];
        let result = sim_node.state.submit_transaction(tx);
        let index = sim_node.consensus.next_commit();
        self.record(
            chain,
            node,
            TraceEvent::Submit {
                tx: id as u64,
                accepted: result.is_ok(),
            },
        );
        let track = &mut self.txs[id];
        match result {
            Ok(()) => {
                track.home.get_or_insert((node.index(), index));
            }
            Err(reason) => {
                track.rejections += 1;
                track.first_reject.get_or_insert(reason);
                if track.rejections == track.targets && track.status == TxStatus::Pending {
                    track.status = TxStatus::Dropped(track.first_reject.unwrap_or(reason));
                }
            }
        }
        self.maybe_propose(chain, node)
    }

    /// Feed a consensus step back into the simulation.
    fn apply(&mut self, chain: ChainId, me: NodeId, step: NodeStep) -> Result<(), Violation> {
        let c = &self.chains[chain as usize];
        let n = c.nodes.len();
        let adversary = c.nodes[me.index()].adversary;
        let base = c.base;
        for (to, msg) in expand_targets(n, step.send) {
            let msg = match adversary {
                Some(kind) => match mutate(kind, me, to, n, msg) {
                    Some(m) => m,
                    None => continue,
                },
                None => msg,
            };
            *self.messages.entry(msg.kind().name()).or_default() += 1;
            *self.edges.entry((base + me.0, base + to.0)).or_default() += 1;
            let at = if to == me {
                self.now
            } else {
                let slow = adversary == Some(AdversaryKind::DelayMax);
                self.network.deliver_at(self.now, &mut self.rng, slow)
            };
            self.schedule(at, Event::Deliver { chain, from: me, to, msg });
        }
        for (timer, delay) in step.timers {
            self.schedule(self.now + delay.max(1), Event::Timer { chain, node: me, timer });
        }
        for sb in step.committed {
            let c = &mut self.chains[chain as usize];
            if adversary.is_none() {
                c.monitor.on_decide(me, &sb)?;
            }
            if me.index() == c.reference() {
                c.cardinality.push(sb.len());
            }
            c.nodes[me.index()].pipeline.push_back(sb);
            self.start_pipeline(chain, me);
        }
        Ok(())
    }

    fn pipeline_cost(cost: &PipelineCost, mode: CommitMode, sb: &Superblock) -> u64 {
        let records = match mode {
            CommitMode::PerBlock => sb.len().max(1),
            CommitMode::WholeSuperblock => 1,
        } as u64;
        (cost.per_tx * sb.tx_count() as u64 + cost.per_block * sb.len() as u64 + cost.per_record * records).max(1)
    }

    fn start_pipeline(&mut self, chain: ChainId, me: NodeId) {
        let c = &mut self.chains[chain as usize];
        let mode = c.setup.commit_mode;
        let node = &mut c.nodes[me.index()];
        if node.busy {
            return;
        }
        let Some(sb) = node.pipeline.front() else {
            return;
        };
        node.busy = true;
        let at = self.now + Self::pipeline_cost(&self.cfg.pipeline, mode, sb);
        self.schedule(at, Event::PipelineDone { chain, node: me });
    }

    fn on_pipeline_done(&mut self, chain: ChainId, me: NodeId) -> Result<(), Violation> {
        let now = self.now;
        let c = &mut self.chains[chain as usize];
        let reference = c.reference();
        let node = &mut c.nodes[me.index()];
        node.busy = false;
        let sb = node.pipeline.pop_front().expect("pipeline event without work");
        let before = node.state.log().len();
        let report = node
            .state
            .commit_superblock(&sb)
            .expect("in-memory commits succeed in order");
        let records = &node.state.log().records()[before..];
        if node.adversary.is_none() {
            c.monitor.on_commit(me, &report, records, node.state.state())?;
        }
        if me.index() == reference {
            for rec in records {
                for block in &rec.blocks {
                    for (tx, outcome) in &block.txs {
                        c.committed.push(CommittedTx {
                            index: rec.index,
                            slot: block.slot,
                            tx: tx.clone(),
                            outcome: *outcome,
                            at: now,
                        });
                    }
                }
            }
        }
        let tag = report.blocks.last().map_or(0, |b| b.digest.low_u64());
        self.record(
            chain,
            me,
            TraceEvent::Commit {
                index: report.index,
                blocks: report.blocks.len() as u64,
                tag,
            },
        );
        for d in &report.committed {
            let Some(&id) = self.by_digest.get(&(chain, *d)) else {
                continue;
            };
            let track = &mut self.txs[id];
            if track.status == TxStatus::Committed {
                continue;
            }
            if let Some((home, pooled_at)) = track.home {
                if home == me.index() {
                    track.status = TxStatus::Committed;
                    self.latencies.push(now - track.submitted_at);
                    self.commit_times.push(now);
                    self.max_lag = self.max_lag.max(report.index.saturating_sub(pooled_at));
                }
            }
        }
        self.start_pipeline(chain, me);
        self.maybe_propose(chain, me)
    }

    /// Propose the next own block once the previous one is included.
    fn maybe_propose(&mut self, chain: ChainId, me: NodeId) -> Result<(), Violation> {
        let flush = self.cfg.flush_partial;
        let now = self.now;
        let c = &mut self.chains[chain as usize];
        let node = &mut c.nodes[me.index()];
        if node.consensus.queue_len() > 0 {
            return Ok(());
        }
        let block = match node.adversary {
            None => {
                if flush {
                    node.state.flush_proposal(now)
                } else {
                    node.state.build_proposal(now)
                }
            }
            Some(AdversaryKind::Silent) => None,
            Some(kind) => Some(junk_block(me, kind, &mut node.junk, &c.setup, now, &mut self.rng)),
        };
        let Some(block) = block else {
            return Ok(());
        };
        self.record(
            chain,
            me,
            TraceEvent::Propose {
                txs: block.transactions().len() as u64,
                tag: block.proposal_digest().low_u64(),
            },
        );
        let step = self.chains[chain as usize].nodes[me.index()].consensus.submit(Arc::new(block));
        self.apply(chain, me, step)
    }

    fn on_read(&mut self, chain: ChainId) -> Result<(), Violation> {
        let c = &self.chains[chain as usize];
        let (n, f) = (c.setup.n, c.setup.f);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order.truncate(2 * f + 1);
        let key = ReadKey::Account(AccountId(self.rng.gen_range(0..self.cfg.accounts.max(1))));
        let honest: Vec<ReadResponse> = c.correct.iter().map(|i| c.nodes[*i].state.read(key)).collect();
        let top = honest.iter().max_by_key(|r| r.height).cloned().expect("a correct node");
        let responses: Vec<ReadResponse> = order
            .iter()
            .map(|i| match c.nodes[*i].adversary {
                None => c.nodes[*i].state.read(key),
                Some(_) => ReadResponse {
                    value: ReadValue::Account(Account {
                        balance: u64::MAX / 3,
                        nonce: 7,
                    }),
                    responder: NodeId::from(*i),
                    ..top.clone()
                },
            })
            .collect();
        let result = quorum_value(&responses, f);
        let queried_correct: Vec<&ReadResponse> = responses
            .iter()
            .filter(|r| c.nodes[r.responder.index()].adversary.is_none())
            .collect();
        let ok = match &result {
            Ok(r) => honest
                .iter()
                .any(|h| (h.height, h.state_digest, &h.value) == (r.height, r.state_digest, &r.value)),
            Err(ReadError::NoQuorum) => {
                let mut heights: BTreeMap<u64, usize> = BTreeMap::new();
                for r in &queried_correct {
                    *heights.entry(r.height).or_default() += 1;
                }
                heights.values().all(|k| *k <= f)
            }
            Err(ReadError::TooFewResponders { .. }) => false,
        };
        let reference = NodeId::from(c.reference());
        let index = top.height;
        self.record(chain, reference, TraceEvent::Read { ok: result.is_ok() });
        if ok {
            Ok(())
        } else {
            Err(Violation {
                kind: ViolationKind::LightClient,
                chain,
                node: reference,
                index,
                at: self.now,
                detail: format!("read of {key:?} returned {result:?}"),
                trace: Vec::new(),
            })
        }
    }

    /// Metrics for one chain.
    pub fn metrics(&self, chain: ChainId) -> RunMetrics {
        let c = &self.chains[chain as usize];
        let mut m = RunMetrics {
            run_id: format!("seed{}-n{}", self.cfg.seed, c.setup.n),
            seed: self.cfg.seed,
            n: c.setup.n,
            f: c.setup.f,
            commit_mode: c.setup.commit_mode.name().to_string(),
            ..RunMetrics::default()
        };
        let mut first_submit = u64::MAX;
        for t in self.txs.iter().filter(|t| t.chain == chain) {
            m.submitted += 1;
            first_submit = first_submit.min(t.submitted_at);
            match t.status {
                TxStatus::Pending => m.pending += 1,
                TxStatus::Committed => m.committed += 1,
                TxStatus::Dropped(r) => {
                    m.dropped += 1;
                    *m.drops.entry(r.label().to_string()).or_default() += 1;
                }
            }
        }
        // Latency and throughput series are global when several chains run.
        m.throughput = throughput_series(&self.commit_times);
        if let Some(last) = self.commit_times.iter().max() {
            let span = last.saturating_sub(first_submit).max(1);
            m.tps_mean = m.committed as f64 * 1e6 / span as f64;
        }
        m.set_latencies(self.latencies.clone());
        m.validations = c.nodes.iter().map(|n| n.state.counters()).collect();
        m.cardinality = c.cardinality.clone();
        m.messages = self.messages.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        m.max_commit_lag = self.max_lag;
        let reference = &c.nodes[c.reference()].state;
        m.height = reference.height();
        m.set_digest(reference.state().state_digest());
        m.end_time = self.now;
        m.events = self.events;
        m
    }

    pub fn finish(self) -> SimOutput {
        let metrics = self.metrics(0);
        SimOutput {
            metrics,
            trace_digest: self.trace.digest(),
            trace: self.trace.into_entries(),
        }
    }
}

/// A byzantine proposal: transactions that never saw eager validation.
/// Flooders fill blocks with them; other behaviours propose a single one so
/// that they have something to equivocate about.
fn junk_block(
    me: NodeId,
    kind: AdversaryKind,
    counter: &mut u64,
    setup: &ChainSetup,
    now: u64,
    rng: &mut ChaCha8Rng,
) -> Block {
    let count = if kind == AdversaryKind::FloodInvalidTx {
        setup.chain.proposal_threshold.min(64)
    } else {
        1
    };
    let accounts: Vec<AccountId> = setup.genesis.accounts().map(|(a, _)| a).collect();
    let txs = (0..count)
        .map(|_| {
            *counter += 1;
            let sender = accounts.get(rng.gen_range(0..accounts.len().max(1))).copied().unwrap_or(AccountId(0));
            let (nonce, gas) = match rng.gen_range(0..3) {
                0 => (rng.gen_range(0..4), setup.chain.intrinsic_gas),
                1 => (1_000_000 + *counter, setup.chain.intrinsic_gas),
                _ => (0, 0),
            };
            let mut tx = Transaction::unsigned(sender, Some(AccountId(me.0 as u64)), nonce, 1, gas, counter.to_le_bytes().to_vec());
            tx.signature = vec![0xEE; 32];
            tx
        })
        .collect();
    Block::proposal_sorting(me, txs, now)
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Violation(Box<Violation>),
}

impl SimError {
    pub fn violation(&self) -> Option<&Violation> {
        match self {
            SimError::Violation(v) => Some(v),
            _ => None,
        }
    }
}

/// Run `cfg` with its configured workload. On a safety violation the run is
/// repeated with tracing on and the violation carries the trace of its chain
/// and index up to that point.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    let stream = generate_workload(&cfg.workload, cfg.accounts, &KeyedMac::default())?;
    run_with_workload(cfg, stream)
}

pub fn run_with_workload(cfg: &SimConfig, stream: Vec<WorkloadTx>) -> Result<SimOutput, SimError> {
    let attempt = |cfg: SimConfig, stream: Vec<WorkloadTx>| -> Result<Result<SimOutput, (Violation, Trace)>, SimError> {
        let mut sim = Simulation::new(cfg)?;
        sim.load_workload(0, stream);
        Ok(match sim.run_to_budget() {
            Ok(()) => Ok(sim.finish()),
            Err(v) => Err((v, std::mem::take(&mut sim.trace))),
        })
    };
    let (v, trace) = match attempt(cfg.clone(), stream.clone())? {
        Ok(out) => return Ok(out),
        Err(failed) if cfg.record_trace => failed,
        Err(_) => {
            let mut traced = cfg.clone();
            traced.record_trace = true;
            match attempt(traced, stream)? {
                Ok(_) => unreachable!("replay of a deterministic run diverged"),
                Err(failed) => failed,
            }
        }
    };
    let mut v = v;
    v.trace = trace
        .into_entries()
        .into_iter()
        .filter(|e| e.chain == v.chain && e.index().map_or(true, |i| i == v.index))
        .collect();
    Err(SimError::Violation(Box::new(v)))
}
