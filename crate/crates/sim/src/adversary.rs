// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Byzantine behaviours. Each one rewrites the outbound traffic (or the
//! proposals) of the node it is assigned to; the transport still stamps the
//! true sender, so identities cannot be forged.

use std::sync::Arc;

use collachain_consensus::{BcMessage, BinValues, ConsensusMessage, RbMessage};
use collachain_core::{Block, NodeId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Sends nothing at all.
    Silent,
    /// Broadcasts a different block to the upper half of the nodes.
    EquivocateRb,
    /// Proposes transactions that never went through eager validation.
    FloodInvalidTx,
    /// Every message arrives as late as the network allows.
    DelayMax,
    /// Flips the bits of its binary agreement votes.
    FlipBits,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 5] = [
        AdversaryKind::Silent,
        AdversaryKind::EquivocateRb,
        AdversaryKind::FloodInvalidTx,
        AdversaryKind::DelayMax,
        AdversaryKind::FlipBits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::Silent => "silent",
            AdversaryKind::EquivocateRb => "equivocate_rb",
            AdversaryKind::FloodInvalidTx => "flood_invalid_tx",
            AdversaryKind::DelayMax => "delay_max",
            AdversaryKind::FlipBits => "flip_bits",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// The block an equivocating broadcaster sends to the second half: same
/// transactions, a later timestamp, so a different digest.
pub fn twin_block(block: &Block) -> Arc<Block> {
    Arc::new(
        Block::proposal(block.proposer(), block.transactions().to_vec(), block.timestamp() + 1)
            .expect("same transactions stay sorted"),
    )
}

/// Rewrite one point-to-point message from byzantine node `me` to `to`.
/// `None` drops it.
pub fn mutate(
    kind: AdversaryKind,
    me: NodeId,
    to: NodeId,
    n: usize,
    msg: ConsensusMessage,
) -> Option<ConsensusMessage> {
    match kind {
        AdversaryKind::Silent => None,
        AdversaryKind::EquivocateRb => Some(match msg {
            ConsensusMessage::Rb {
                index,
                broadcaster,
                body: RbMessage::Init(block),
            } if broadcaster == me && to.index() >= n / 2 => ConsensusMessage::Rb {
                index,
                broadcaster,
                body: RbMessage::Init(twin_block(&block)),
            },
            other => other,
        }),
        AdversaryKind::FlipBits => Some(match msg {
            ConsensusMessage::Bc { index, slot, body } => ConsensusMessage::Bc {
                index,
                slot,
                body: flip(body),
            },
            other => other,
        }),
        AdversaryKind::FloodInvalidTx | AdversaryKind::DelayMax => Some(msg),
    }
}

fn flip(body: BcMessage) -> BcMessage {
    match body {
        BcMessage::Est { round, value } => BcMessage::Est { round, value: !value },
        BcMessage::Coord { round, value } => BcMessage::Coord { round, value: !value },
        BcMessage::Aux { round, values } => BcMessage::Aux {
            round,
            values: match values.as_single() {
                Some(v) => BinValues::single(!v),
                None => values,
            },
        },
    }
}
