// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Superblock consensus.
//!
//! Every node reliably broadcasts its proposed block; one binary agreement per
//! proposer slot then decides which delivered blocks enter the superblock.
//! All state machines here are pure `(state, message) -> (state, outputs)`
//! transitions; the caller owns transport and timers.

pub mod binary;
pub mod message;
pub mod node;
pub mod rbc;
pub mod superblock;

pub use binary::{BinValues, BinaryAgreement, BcMessage, BcOutput};
pub use message::{ConsensusMessage, MessageKind, Outbound, Target};
pub use node::{ConsensusNode, NodeStep, TimerId};
pub use rbc::{RbInstance, RbKey, RbMessage, RbOutput, RbPhase};
pub use node::NodeConfig;
pub use superblock::{expand_targets, InstanceStep, SuperblockInstance};

/// Quorum sizes for `n` nodes tolerating `f` byzantine ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quorums {
    pub n: usize,
    pub f: usize,
}

impl Quorums {
    pub fn new(n: usize, f: usize) -> Self {
        assert!(n >= 3 * f + 1, "need n >= 3f + 1");
        Self { n, f }
    }

    /// Some correct node is among any `f + 1` senders.
    pub fn weak(&self) -> usize {
        self.f + 1
    }

    /// `2f + 1`.
    pub fn strong(&self) -> usize {
        2 * self.f + 1
    }

    /// Echoes needed before READY: `ceil((n + f + 1) / 2)`, which is `2f + 1`
    /// when `n = 3f + 1` and keeps two echo quorums intersecting in a correct
    /// node for larger `n`.
    pub fn echo(&self) -> usize {
        (self.n + self.f + 2) / 2
    }

    /// `n - f`: every correct node can always gather this many.
    pub fn live(&self) -> usize {
        self.n - self.f
    }
}
