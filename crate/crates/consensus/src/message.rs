// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Consensus wire messages.
//!
//! Layout: `tag: u8 | index: u64 | key: u32 | body`, where `key` is the
//! broadcaster for broadcast messages and the slot for binary agreement.
//! Bodies: INIT/PAYLOAD carry a length-prefixed block; ECHO/READY/FETCH a
//! 32-byte digest; EST/COORD `round: u64 | bit: u8` with bit in {0, 1};
//! AUX `round: u64 | mask: u8` with mask in {1 = {0}, 2 = {1}, 3 = {0, 1}}.

use std::sync::Arc;

use collachain_core::codec::{CodecError, Reader, Writer};
use collachain_core::{Block, Canonical, NodeId};

use crate::binary::{BcMessage, BinValues};
use crate::rbc::RbMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Init = 0,
    Echo = 1,
    Ready = 2,
    Est = 3,
    Aux = 4,
    Coord = 5,
    Fetch = 6,
    Payload = 7,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::Init,
        MessageKind::Echo,
        MessageKind::Ready,
        MessageKind::Est,
        MessageKind::Aux,
        MessageKind::Coord,
        MessageKind::Fetch,
        MessageKind::Payload,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Init => "INIT",
            MessageKind::Echo => "ECHO",
            MessageKind::Ready => "READY",
            MessageKind::Est => "EST",
            MessageKind::Aux => "AUX",
            MessageKind::Coord => "COORD",
            MessageKind::Fetch => "FETCH",
            MessageKind::Payload => "PAYLOAD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConsensusMessage {
    Rb {
        index: u64,
        broadcaster: NodeId,
        body: RbMessage,
    },
    Bc {
        index: u64,
        slot: NodeId,
        body: BcMessage,
    },
}

impl ConsensusMessage {
    pub fn index(&self) -> u64 {
        match self {
            ConsensusMessage::Rb { index, .. } | ConsensusMessage::Bc { index, .. } => *index,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            ConsensusMessage::Rb { body, .. } => match body {
                RbMessage::Init(_) => MessageKind::Init,
                RbMessage::Echo(_) => MessageKind::Echo,
                RbMessage::Ready(_) => MessageKind::Ready,
                RbMessage::Fetch(_) => MessageKind::Fetch,
                RbMessage::Payload(_) => MessageKind::Payload,
            },
            ConsensusMessage::Bc { body, .. } => match body {
                BcMessage::Est { .. } => MessageKind::Est,
                BcMessage::Aux { .. } => MessageKind::Aux,
                BcMessage::Coord { .. } => MessageKind::Coord,
            },
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let mut w = Writer::new();
        w.put_u8(self.kind() as u8);
        match self {
            ConsensusMessage::Rb {
                index,
                broadcaster,
                body,
            } => {
                w.put_u64(*index);
                w.put_u32(broadcaster.0);
                match body {
                    RbMessage::Init(b) | RbMessage::Payload(b) => {
                        w.put_bytes(&b.canonical_encode()?)?;
                    }
                    RbMessage::Echo(d) | RbMessage::Ready(d) | RbMessage::Fetch(d) => w.put_digest(d),
                }
            }
            ConsensusMessage::Bc { index, slot, body } => {
                w.put_u64(*index);
                w.put_u32(slot.0);
                match body {
                    BcMessage::Est { round, value } | BcMessage::Coord { round, value } => {
                        w.put_u64(*round);
                        w.put_u8(u8::from(*value));
                    }
                    BcMessage::Aux { round, values } => {
                        w.put_u64(*round);
                        w.put_u8(values.mask());
                    }
                }
            }
        }
        w.finish()
    }

    /// Decodes one frame. Bit fields outside their domain yield
    /// `DecodeError::MalformedBit` so receivers can count and drop them.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tag = r.get_u8()?;
        let kind = *MessageKind::ALL
            .get(tag as usize)
            .ok_or(DecodeError::UnknownTag(tag))?;
        let index = r.get_u64()?;
        let key = NodeId(r.get_u32()?);
        let msg = match kind {
            MessageKind::Init | MessageKind::Payload => {
                let block = Arc::new(Block::canonical_decode(&r.get_bytes()?)?);
                let body = if kind == MessageKind::Init {
                    RbMessage::Init(block)
                } else {
                    RbMessage::Payload(block)
                };
                ConsensusMessage::Rb {
                    index,
                    broadcaster: key,
                    body,
                }
            }
            MessageKind::Echo | MessageKind::Ready | MessageKind::Fetch => {
                let d = r.get_digest()?;
                let body = match kind {
                    MessageKind::Echo => RbMessage::Echo(d),
                    MessageKind::Ready => RbMessage::Ready(d),
                    _ => RbMessage::Fetch(d),
                };
                ConsensusMessage::Rb {
                    index,
                    broadcaster: key,
                    body,
                }
            }
            MessageKind::Est | MessageKind::Coord | MessageKind::Aux => {
                let round = r.get_u64()?;
                let raw = r.get_u8()?;
                let body = match kind {
                    MessageKind::Aux => BcMessage::Aux {
                        round,
                        values: BinValues::from_mask(raw).ok_or(DecodeError::MalformedBit(raw))?,
                    },
                    _ => {
                        let value = match raw {
                            0 => false,
                            1 => true,
                            other => return Err(DecodeError::MalformedBit(other)),
                        };
                        if kind == MessageKind::Est {
                            BcMessage::Est { round, value }
                        } else {
                            BcMessage::Coord { round, value }
                        }
                    }
                };
                ConsensusMessage::Bc {
                    index,
                    slot: key,
                    body,
                }
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("malformed bit value {0}")]
    MalformedBit(u8),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Every node, including the sender.
    All,
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Outbound {
    pub to: Target,
    pub msg: ConsensusMessage,
}

impl Outbound {
    pub fn all(msg: ConsensusMessage) -> Self {
        Self {
            to: Target::All,
            msg,
        }
    }

    pub fn to(node: NodeId, msg: ConsensusMessage) -> Self {
        Self {
            to: Target::Node(node),
            msg,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use collachain_core::{AccountId, Digest, Transaction};

    fn samples() -> Vec<ConsensusMessage> {
        let tx = Transaction::unsigned(AccountId(1), None, 0, 0, 21, b"hi".to_vec());
        let block = Arc::new(Block::proposal(NodeId(2), vec![tx], 9).unwrap());
        let rb = |body| ConsensusMessage::Rb {
            index: 3,
            broadcaster: NodeId(2),
            body,
        };
        let bc = |body| ConsensusMessage::Bc {
            index: 3,
            slot: NodeId(1),
            body,
        };
        vec![
            rb(RbMessage::Init(block.clone())),
            rb(RbMessage::Echo(Digest([4; 32]))),
            rb(RbMessage::Ready(Digest([5; 32]))),
            bc(BcMessage::Est { round: 2, value: true }),
            bc(BcMessage::Aux {
                round: 2,
                values: BinValues::BOTH,
            }),
            bc(BcMessage::Coord { round: 7, value: false }),
            rb(RbMessage::Fetch(Digest([6; 32]))),
            rb(RbMessage::Payload(block)),
        ]
    }

    #[test]
    fn tags_follow_wire_numbering_and_roundtrip() {
        for (i, m) in samples().into_iter().enumerate() {
            let bytes = m.encode().unwrap();
            assert_eq!(bytes[0] as usize, i, "{:?}", m.kind());
            assert_eq!(ConsensusMessage::decode(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn malformed_bits_are_reported() {
        let m = ConsensusMessage::Bc {
            index: 1,
            slot: NodeId(0),
            body: BcMessage::Est { round: 1, value: true },
        };
        let mut bytes = m.encode().unwrap();
        *bytes.last_mut().unwrap() = 2;
        assert_eq!(ConsensusMessage::decode(&bytes), Err(DecodeError::MalformedBit(2)));
        bytes[0] = MessageKind::Aux as u8;
        *bytes.last_mut().unwrap() = 0;
        assert_eq!(ConsensusMessage::decode(&bytes), Err(DecodeError::MalformedBit(0)));
        bytes[0] = 9;
        assert_eq!(ConsensusMessage::decode(&bytes), Err(DecodeError::UnknownTag(9)));
    }
}
