// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic binary agreement with a weak coordinator (DBFT).
//!
//! Each round `r` (starting at 1):
//!
//! * Binary-value broadcast: send `EST(est)`; relay `EST(v)` after `f + 1`
//!   distinct senders; add `v` to `bin_values` after `2f + 1`.
//! * Once `bin_values` is non-empty, arm the round timer. The coordinator
//!   (`r mod n`) sends `COORD(w)` for the first value `w` in its
//!   `bin_values`.
//! * Send `AUX({w})` on a coordinator value `w` in `bin_values`, or
//!   `AUX(bin_values)` once the timer expires.
//! * Wait for `n - f` AUX sets contained in `bin_values`. If they all equal
//!   `{v}`, adopt `v` and decide it when `v == r mod 2`; otherwise adopt the
//!   round parity `r mod 2`.
//!
//! After deciding in round `d` a node keeps participating through round
//! `d + 2`, by which point every correct node has decided; it then halts and
//! absorbs further messages.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use collachain_core::NodeId;
use thiserror::Error;

use crate::Quorums;

/// Subset of `{false, true}` as a two-bit mask.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BinValues(u8);

impl BinValues {
    pub const NONE: BinValues = BinValues(0);
    pub const FALSE: BinValues = BinValues(1);
    pub const TRUE: BinValues = BinValues(2);
    pub const BOTH: BinValues = BinValues(3);

    pub fn single(v: bool) -> Self {
        if v {
            Self::TRUE
        } else {
            Self::FALSE
        }
    }

    /// Non-empty masks only; the empty set is not a valid AUX payload.
    pub fn from_mask(mask: u8) -> Option<Self> {
        (1..=3).contains(&mask).then_some(BinValues(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn contains(self, v: bool) -> bool {
        self.0 & Self::single(v).0 != 0
    }

    pub fn insert(&mut self, v: bool) {
        self.0 |= Self::single(v).0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: BinValues) -> bool {
        self.0 & !other.0 == 0
    }

    /// The sole element, if this is a singleton.
    pub fn as_single(self) -> Option<bool> {
        match self.0 {
            1 => Some(false),
            2 => Some(true),
            _ => None,
        }
    }
}

impl fmt::Debug for BinValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => f.write_str("{}"),
            1 => f.write_str("{0}"),
            2 => f.write_str("{1}"),
            _ => f.write_str("{0,1}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcMessage {
    Est { round: u64, value: bool },
    Aux { round: u64, values: BinValues },
    Coord { round: u64, value: bool },
}

impl BcMessage {
    pub fn round(&self) -> u64 {
        match self {
            BcMessage::Est { round, .. } | BcMessage::Aux { round, .. } | BcMessage::Coord { round, .. } => *round,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BcError {
    #[error("conflicting proposal: already proposed {0}")]
    ConflictingProposal(bool),
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct BcOutput {
    /// Messages for every node, the sender included.
    pub broadcast: Vec<BcMessage>,
    /// `(round, delay)` timers to arm; report expiry via `on_timeout`.
    pub timers: Vec<(u64, u64)>,
    pub decided: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct RoundState {
    est_from: [BTreeSet<NodeId>; 2],
    est_sent: [bool; 2],
    bin_values: BinValues,
    first_bin: Option<bool>,
    aux_from: BTreeMap<NodeId, BinValues>,
    coord: Option<bool>,
    coord_sent: bool,
    aux_sent: bool,
    timer_armed: bool,
    timer_expired: bool,
}

/// Rounds further ahead than this are dropped to bound memory.
pub const MAX_ROUNDS_AHEAD: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryAgreement {
    quorums: Quorums,
    me: NodeId,
    timeout_base: u64,
    proposal: Option<bool>,
    /// 0 until the local proposal.
    round: u64,
    est: bool,
    rounds: BTreeMap<u64, RoundState>,
    decided: Option<(bool, u64)>,
    halted: bool,
    dropped: u64,
}

impl BinaryAgreement {
    pub fn new(quorums: Quorums, me: NodeId, timeout_base: u64) -> Self {
        Self {
            quorums,
            me,
            timeout_base,
            proposal: None,
            round: 0,
            est: false,
            rounds: BTreeMap::new(),
            decided: None,
            halted: false,
            dropped: 0,
        }
    }

    pub fn proposal(&self) -> Option<bool> {
        self.proposal
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn estimate(&self) -> bool {
        self.est
    }

    pub fn decided(&self) -> Option<bool> {
        self.decided.map(|(v, _)| v)
    }

    /// Round in which the decision was reached.
    pub fn decision_round(&self) -> Option<u64> {
        self.decided.map(|(_, r)| r)
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Messages ignored as out of window or malformed.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn bin_values(&self, round: u64) -> BinValues {
        self.rounds.get(&round).map(|r| r.bin_values).unwrap_or_default()
    }

    pub fn coordinator(&self, round: u64) -> NodeId {
        NodeId::from((round % self.quorums.n as u64) as usize)
    }

    /// Round timeout: `base * 2^(round - 1)`, capped at 2^16 multiples.
    pub fn timeout(&self, round: u64) -> u64 {
        self.timeout_base
            .saturating_mul(1u64 << round.saturating_sub(1).min(16))
    }

    pub fn propose(&mut self, value: bool) -> Result<BcOutput, BcError> {
        match self.proposal {
            Some(p) if p == value => return Ok(BcOutput::default()),
            Some(p) => return Err(BcError::ConflictingProposal(p)),
            None => {}
        }
        self.proposal = Some(value);
        let mut out = BcOutput::default();
        if self.halted {
            return Ok(out);
        }
        self.est = value;
        self.enter_round(1, &mut out);
        self.progress(&mut out);
        Ok(out)
    }

    pub fn handle(&mut self, from: NodeId, msg: BcMessage) -> BcOutput {
        let mut out = BcOutput::default();
        if self.halted {
            return out;
        }
        let round = msg.round();
        if round == 0 || round > self.round.max(1) + MAX_ROUNDS_AHEAD || from.index() >= self.quorums.n {
            self.dropped += 1;
            return out;
        }
        let q = self.quorums;
        let coordinator = self.coordinator(round);
        let rs = self.rounds.entry(round).or_default();
        match msg {
            BcMessage::Est { value, .. } => {
                let senders = &mut rs.est_from[value as usize];
                if !senders.insert(from) {
                    return out;
                }
                let count = senders.len();
                if count >= q.weak() && !rs.est_sent[value as usize] {
                    rs.est_sent[value as usize] = true;
                    out.broadcast.push(BcMessage::Est { round, value });
                }
                if count >= q.strong() && !rs.bin_values.contains(value) {
                    rs.bin_values.insert(value);
                    rs.first_bin.get_or_insert(value);
                }
            }
            BcMessage::Aux { values, .. } => {
                if values.is_empty() {
                    self.dropped += 1;
                    return out;
                }
                rs.aux_from.entry(from).or_insert(values);
            }
            BcMessage::Coord { value, .. } => {
                if from == coordinator && rs.coord.is_none() {
                    rs.coord = Some(value);
                }
            }
        }
        self.progress(&mut out);
        out
    }

    pub fn on_timeout(&mut self, round: u64) -> BcOutput {
        let mut out = BcOutput::default();
        if self.halted || round != self.round {
            return out;
        }
        if let Some(rs) = self.rounds.get_mut(&round) {
            rs.timer_expired = true;
        }
        self.progress(&mut out);
        out
    }

    fn enter_round(&mut self, round: u64, out: &mut BcOutput) {
        self.round = round;
        let est = self.est;
        let rs = self.rounds.entry(round).or_default();
        if !rs.est_sent[est as usize] {
            rs.est_sent[est as usize] = true;
            out.broadcast.push(BcMessage::Est { round, value: est });
        }
    }

    fn progress(&mut self, out: &mut BcOutput) {
        while self.round > 0 && !self.halted {
            let r = self.round;
            let q = self.quorums;
            let is_coord = self.coordinator(r) == self.me;
            let timeout = self.timeout(r);
            let rs = self.rounds.entry(r).or_default();
            if rs.bin_values.is_empty() {
                return;
            }
            if !rs.timer_armed {
                rs.timer_armed = true;
                out.timers.push((r, timeout));
            }
            if is_coord && !rs.coord_sent {
                rs.coord_sent = true;
                let value = rs.first_bin.expect("bin_values non-empty");
                rs.coord.get_or_insert(value);
                out.broadcast.push(BcMessage::Coord { round: r, value });
            }
            if !rs.aux_sent {
                let aux = match rs.coord {
                    Some(w) if rs.bin_values.contains(w) => Some(BinValues::single(w)),
                    _ if rs.timer_expired => Some(rs.bin_values),
                    _ => None,
                };
                match aux {
                    Some(values) => {
                        rs.aux_sent = true;
                        out.broadcast.push(BcMessage::Aux { round: r, values });
                    }
                    None => return,
                }
            }
            let Some(values) = aux_quorum(rs, q) else {
                return;
            };
            let parity = r % 2 == 1;
            match values.as_single() {
                Some(v) => {
                    self.est = v;
                    if v == parity && self.decided.is_none() {
                        self.decided = Some((v, r));
                        out.decided = Some(v);
                    }
                }
                None => self.est = parity,
            }
            if matches!(self.decided, Some((_, d)) if r >= d + 2) {
                self.halted = true;
                return;
            }
            self.enter_round(r + 1, out);
        }
    }
}

/// The `values` set of a completed AUX phase, if `n - f` senders sent sets
/// within `bin_values`. A singleton is preferred whenever `n - f` senders
/// agree on it.
fn aux_quorum(rs: &RoundState, q: Quorums) -> Option<BinValues> {
    let mut qualified = 0;
    let mut singles = [0usize; 2];
    for vals in rs.aux_from.values() {
        if vals.is_subset(rs.bin_values) {
            qualified += 1;
            if let Some(v) = vals.as_single() {
                singles[v as usize] += 1;
            }
        }
    }
    if qualified < q.live() {
        return None;
    }
    for v in [false, true] {
        if singles[v as usize] >= q.live() {
            return Some(BinValues::single(v));
        }
    }
    Some(BinValues::BOTH)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(n: usize, f: usize, me: u32) -> BinaryAgreement {
        BinaryAgreement::new(Quorums::new(n, f), NodeId(me), 10)
    }

    #[test]
    fn bin_values_set_ops() {
        let mut b = BinValues::NONE;
        assert!(b.is_empty());
        b.insert(true);
        assert_eq!(b, BinValues::TRUE);
        assert!(BinValues::TRUE.is_subset(BinValues::BOTH));
        assert!(!BinValues::BOTH.is_subset(BinValues::TRUE));
        assert_eq!(BinValues::BOTH.as_single(), None);
        assert_eq!(BinValues::from_mask(0), None);
        assert_eq!(BinValues::from_mask(4), None);
    }

    #[test]
    fn conflicting_proposal_is_rejected_and_same_bit_is_idempotent() {
        let mut bc = node(4, 1, 0);
        let out = bc.propose(true).unwrap();
        assert_eq!(out.broadcast, vec![BcMessage::Est { round: 1, value: true }]);
        assert_eq!(bc.propose(true).unwrap(), BcOutput::default());
        assert_eq!(bc.propose(false), Err(BcError::ConflictingProposal(true)));
    }

    /// Single-round trace: node 1 (not coordinator) with n = 4, f = 1.
    #[test]
    fn single_round_trace_decides_one() {
        let mut bc = node(4, 1, 1);
        bc.propose(true).unwrap();
        // f + 1 = 2 ESTs: relay is a no-op since EST(1) was already sent.
        assert!(bc.handle(NodeId(0), BcMessage::Est { round: 1, value: true }).broadcast.is_empty());
        bc.handle(NodeId(1), BcMessage::Est { round: 1, value: true });
        // 2f + 1 = 3 ESTs: 1 enters bin_values, timer armed.
        let out = bc.handle(NodeId(2), BcMessage::Est { round: 1, value: true });
        assert_eq!(bc.bin_values(1), BinValues::TRUE);
        assert_eq!(out.timers, vec![(1, 10)]);
        // Coordinator of round 1 is node 1 (1 mod 4): it sends COORD and AUX({1}).
        assert!(out.broadcast.contains(&BcMessage::Coord { round: 1, value: true }));
        assert!(out.broadcast.contains(&BcMessage::Aux { round: 1, values: BinValues::TRUE }));
        bc.handle(NodeId(0), BcMessage::Aux { round: 1, values: BinValues::TRUE });
        bc.handle(NodeId(1), BcMessage::Aux { round: 1, values: BinValues::TRUE });
        // AUX carrying a value outside bin_values does not count.
        let out = bc.handle(NodeId(3), BcMessage::Aux { round: 1, values: BinValues::FALSE });
        assert_eq!(out.decided, None);
        let out = bc.handle(NodeId(2), BcMessage::Aux { round: 1, values: BinValues::TRUE });
        assert_eq!(out.decided, Some(true));
        assert_eq!(bc.decision_round(), Some(1));
        assert_eq!(bc.round(), 2);
        assert_eq!(out.broadcast, vec![BcMessage::Est { round: 2, value: true }]);
    }

    #[test]
    fn non_coordinator_waits_for_timer_without_coord() {
        let mut bc = node(4, 1, 2);
        bc.propose(false).unwrap();
        for i in 0..3 {
            bc.handle(NodeId(i), BcMessage::Est { round: 1, value: false });
        }
        assert_eq!(bc.bin_values(1), BinValues::FALSE);
        // COORD from a non-coordinator is ignored.
        let out = bc.handle(NodeId(3), BcMessage::Coord { round: 1, value: false });
        assert!(out.broadcast.is_empty());
        let out = bc.on_timeout(1);
        assert_eq!(out.broadcast, vec![BcMessage::Aux { round: 1, values: BinValues::FALSE }]);
    }

    #[test]
    fn mixed_aux_adopts_parity() {
        let mut bc = node(4, 1, 2);
        bc.propose(false).unwrap();
        for i in 0..3 {
            bc.handle(NodeId(i), BcMessage::Est { round: 1, value: false });
            bc.handle(NodeId(i), BcMessage::Est { round: 1, value: true });
        }
        assert_eq!(bc.bin_values(1), BinValues::BOTH);
        bc.on_timeout(1);
        bc.handle(NodeId(0), BcMessage::Aux { round: 1, values: BinValues::FALSE });
        bc.handle(NodeId(1), BcMessage::Aux { round: 1, values: BinValues::TRUE });
        let out = bc.handle(NodeId(2), BcMessage::Aux { round: 1, values: BinValues::BOTH });
        assert_eq!(out.decided, None);
        // Round 1 parity is 1.
        assert!(bc.estimate());
        assert_eq!(bc.round(), 2);
    }

    #[test]
    fn halted_instance_absorbs_messages() {
        let mut bc = node(1, 0, 0);
        let out = bc.propose(true).unwrap();
        assert_eq!(out.broadcast, vec![BcMessage::Est { round: 1, value: true }]);
        // Feed our own messages back until the instance halts.
        let mut inbox: Vec<BcMessage> = out.broadcast;
        let mut decided = None;
        while let Some(m) = inbox.pop() {
            let o = bc.handle(NodeId(0), m);
            decided = decided.or(o.decided);
            inbox.extend(o.broadcast);
        }
        assert_eq!(decided, Some(true));
        assert!(bc.is_halted());
        assert_eq!(bc.round(), 3);
        let out = bc.handle(NodeId(0), BcMessage::Est { round: 9, value: false });
        assert_eq!(out, BcOutput::default());
    }

    #[test]
    fn far_future_and_foreign_messages_dropped() {
        let mut bc = node(4, 1, 0);
        bc.handle(NodeId(1), BcMessage::Est { round: MAX_ROUNDS_AHEAD + 5, value: true });
        bc.handle(NodeId(9), BcMessage::Est { round: 1, value: true });
        bc.handle(NodeId(1), BcMessage::Est { round: 0, value: true });
        assert_eq!(bc.dropped(), 3);
    }

    #[test]
    fn timeouts_grow_exponentially() {
        let bc = node(4, 1, 0);
        assert_eq!(bc.timeout(1), 10);
        assert_eq!(bc.timeout(2), 20);
        assert_eq!(bc.timeout(4), 80);
    }
}
