// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_list, Canonical, CodecError, CodecResult, Reader, Writer};
use crate::digest::{digest_of, Digest};
use crate::signature::SignatureScheme;

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl AccountId {
    /// Receives the flat gas fee when it is non-zero.
    pub const FEE_SINK: AccountId = AccountId(u64::MAX);
    /// Built-in committee rotation contract.
    pub const MEMBERSHIP: AccountId = AccountId(u64::MAX - 1);
    /// Built-in cross-shard bridge contract (withdraw burns, credit mints).
    pub const BRIDGE: AccountId = AccountId(u64::MAX - 2);
    /// Beacon escrow holding shard deposits.
    pub const ESCROW: AccountId = AccountId(u64::MAX - 3);

    pub fn is_builtin(self) -> bool {
        self.0 >= u64::MAX - 3
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AccountId::FEE_SINK => f.write_str("acct:fee"),
            AccountId::MEMBERSHIP => f.write_str("acct:membership"),
            AccountId::BRIDGE => f.write_str("acct:bridge"),
            AccountId::ESCROW => f.write_str("acct:escrow"),
            AccountId(v) => write!(f, "acct:{v}"),
        }
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(u32::try_from(v).expect("node id fits u32"))
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A signed transfer and/or payload post.
///
/// Fields are public so that tests and byzantine actors can build malformed
/// transactions; well-formedness is enforced by validation, not by the type.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub sender: AccountId,
    pub recipient: Option<AccountId>,
    pub nonce: u64,
    pub amount: u64,
    pub gas_limit: u64,
    pub payload: Vec<u8>,
    pub signature: Vec<u8>,
}

impl Transaction {
    pub fn unsigned(
        sender: AccountId,
        recipient: Option<AccountId>,
        nonce: u64,
        amount: u64,
        gas_limit: u64,
        payload: Vec<u8>,
    ) -> Self {
        Self {
            sender,
            recipient,
            nonce,
            amount,
            gas_limit,
            payload,
            signature: Vec::new(),
        }
    }

    pub fn signed(mut self, scheme: &dyn SignatureScheme) -> Self {
        self.signature = scheme.sign(self.sender, &self.signing_bytes());
        self
    }

    /// Canonical encoding of every field preceding the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(48 + self.payload.len());
        self.encode_body(&mut w)
            .expect("payload length checked at construction sites");
        w.finish().unwrap_or_default()
    }

    pub fn verify(&self, scheme: &dyn SignatureScheme) -> bool {
        scheme.verify(self.sender, &self.signing_bytes(), &self.signature)
    }

    /// Byte count of the canonical encoding.
    pub fn size(&self) -> usize {
        let recipient = if self.recipient.is_some() { 9 } else { 1 };
        8 + recipient + 8 + 8 + 8 + 4 + self.payload.len() + 4 + self.signature.len()
    }

    pub fn digest(&self) -> Digest {
        digest_of(&self.canonical_encode().expect("transaction encodes"))
    }

    /// Sort key used for blocks and the pool.
    pub fn order_key(&self) -> (AccountId, u64) {
        (self.sender, self.nonce)
    }

    fn encode_body(&self, w: &mut Writer) -> CodecResult<()> {
        w.put_u64(self.sender.0);
        match self.recipient {
            Some(r) => {
                w.put_u8(1);
                w.put_u64(r.0);
            }
            None => w.put_u8(0),
        }
        w.put_u64(self.nonce);
        w.put_u64(self.amount);
        w.put_u64(self.gas_limit);
        w.put_bytes(&self.payload)
    }
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tx")
            .field("sender", &self.sender)
            .field("recipient", &self.recipient)
            .field("nonce", &self.nonce)
            .field("amount", &self.amount)
            .field("gas", &self.gas_limit)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

impl Canonical for Transaction {
    fn encode_into(&self, w: &mut Writer) -> CodecResult<()> {
        self.encode_body(w)?;
        w.put_bytes(&self.signature)
    }

    fn decode_from(r: &mut Reader<'_>) -> CodecResult<Self> {
        let sender = AccountId(r.get_u64()?);
        let recipient = if r.get_flag()? {
            Some(AccountId(r.get_u64()?))
        } else {
            None
        };
        Ok(Self {
            sender,
            recipient,
            nonce: r.get_u64()?,
            amount: r.get_u64()?,
            gas_limit: r.get_u64()?,
            payload: r.get_bytes()?,
            signature: r.get_bytes()?,
        })
    }
}

/// Smallest possible encoded transaction, used to bound list decoding.
const MIN_TX_LEN: usize = 8 + 1 + 8 + 8 + 8 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("transactions not sorted by (sender, nonce) at position {0}")]
    Unsorted(usize),
    #[error("block timestamp {timestamp} precedes parent timestamp {parent}")]
    TimestampRegression { timestamp: u64, parent: u64 },
    #[error("superblock blocks not strictly ordered by proposer at position {0}")]
    SuperblockOrder(usize),
    #[error("block digest does not match its contents")]
    DigestMismatch,
}

/// A proposer-tagged batch of transactions.
///
/// Proposals carry no digest; `seal` assigns parent, timestamp, and digest
/// once the enclosing superblock is decided.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Block {
    proposer: NodeId,
    transactions: Vec<Transaction>,
    timestamp: u64,
    parent_digest: Option<Digest>,
    digest: Option<Digest>,
}

/// proposer + timestamp + two fixed-width optional digests + tx count
pub const BLOCK_HEADER_LEN: usize = 4 + 8 + 33 + 33 + 4;

impl Block {
    pub fn proposal(
        proposer: NodeId,
        transactions: Vec<Transaction>,
        timestamp: u64,
    ) -> Result<Self, BlockError> {
        check_sorted(&transactions)?;
        Ok(Self {
            proposer,
            transactions,
            timestamp,
            parent_digest: None,
            digest: None,
        })
    }

    /// Sorts the transactions into canonical order before building.
    pub fn proposal_sorting(
        proposer: NodeId,
        mut transactions: Vec<Transaction>,
        timestamp: u64,
    ) -> Self {
        transactions.sort_by_key(Transaction::order_key);
        Self::proposal(proposer, transactions, timestamp).expect("sorted above")
    }

    pub fn proposer(&self) -> NodeId {
        self.proposer
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn parent_digest(&self) -> Option<Digest> {
        self.parent_digest
    }

    pub fn digest(&self) -> Option<Digest> {
        self.digest
    }

    pub fn is_sealed(&self) -> bool {
        self.digest.is_some()
    }

    /// Digest of the proposal contents as circulated before commit. Used to
    /// identify proposals during broadcast; not the committed block digest.
    pub fn proposal_digest(&self) -> Digest {
        digest_of(&self.canonical_encode().expect("block encodes"))
    }

    /// Set parent and timestamp, then fill the digest over the resulting
    /// encoding (with the digest field itself absent). Equal timestamps to
    /// the parent are accepted.
    pub fn seal(
        &self,
        parent: Option<(Digest, u64)>,
        timestamp: u64,
    ) -> Result<Block, BlockError> {
        if let Some((_, parent_ts)) = parent {
            if timestamp < parent_ts {
                return Err(BlockError::TimestampRegression {
                    timestamp,
                    parent: parent_ts,
                });
            }
        }
        let mut sealed = Block {
            proposer: self.proposer,
            transactions: self.transactions.clone(),
            timestamp,
            parent_digest: parent.map(|(d, _)| d),
            digest: None,
        };
        sealed.digest = Some(sealed.proposal_digest());
        Ok(sealed)
    }

    pub fn verify_digest(&self) -> Result<(), BlockError> {
        let Some(d) = self.digest else {
            return Ok(());
        };
        let mut unsealed = self.clone();
        unsealed.digest = None;
        if unsealed.proposal_digest() == d {
            Ok(())
        } else {
            Err(BlockError::DigestMismatch)
        }
    }
}

fn check_sorted(txs: &[Transaction]) -> Result<(), BlockError> {
    match txs
        .windows(2)
        .position(|w| w[0].order_key() > w[1].order_key())
    {
        Some(i) => Err(BlockError::Unsorted(i + 1)),
        None => Ok(()),
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Block")
            .field("proposer", &self.proposer)
            .field("txs", &self.transactions.len())
            .field("timestamp", &self.timestamp)
            .field("digest", &self.digest)
            .finish()
    }
}

impl Canonical for Block {
    fn encode_into(&self, w: &mut Writer) -> CodecResult<()> {
        w.put_u32(self.proposer.0);
        w.put_u64(self.timestamp);
        w.put_opt_digest_fixed(self.parent_digest.as_ref());
        w.put_opt_digest_fixed(self.digest.as_ref());
        w.put_len(self.transactions.len())?;
        for tx in &self.transactions {
            let bytes = tx.canonical_encode()?;
            w.put_bytes(&bytes)?;
        }
        Ok(())
    }

    fn decode_from(r: &mut Reader<'_>) -> CodecResult<Self> {
        let proposer = NodeId(r.get_u32()?);
        let timestamp = r.get_u64()?;
        let parent_digest = r.get_opt_digest_fixed()?;
        let digest = r.get_opt_digest_fixed()?;
        let transactions = decode_list(r, MIN_TX_LEN + 4, |r| {
            let bytes = r.get_bytes()?;
            Transaction::canonical_decode(&bytes)
        })?;
        check_sorted(&transactions).map_err(|_| CodecError::Malformed("unsorted block"))?;
        Ok(Self {
            proposer,
            transactions,
            timestamp,
            parent_digest,
            digest,
        })
    }
}

/// The per-index decision: accepted blocks in ascending proposer order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Superblock {
    index: u64,
    blocks: Vec<Arc<Block>>,
}

impl Superblock {
    pub fn new(index: u64, blocks: Vec<Arc<Block>>) -> Result<Self, BlockError> {
        if let Some(i) = blocks
            .windows(2)
            .position(|w| w[0].proposer() >= w[1].proposer())
        {
            return Err(BlockError::SuperblockOrder(i + 1));
        }
        Ok(Self { index, blocks })
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tx_count(&self) -> usize {
        self.blocks.iter().map(|b| b.transactions().len()).sum()
    }

    pub fn digest(&self) -> Digest {
        digest_of(&self.canonical_encode().expect("superblock encodes"))
    }
}

impl fmt::Debug for Superblock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let proposers: Vec<_> = self.blocks.iter().map(|b| b.proposer()).collect();
        f.debug_struct("Superblock")
            .field("index", &self.index)
            .field("proposers", &proposers)
            .finish()
    }
}

impl Canonical for Superblock {
    fn encode_into(&self, w: &mut Writer) -> CodecResult<()> {
        w.put_u64(self.index);
        w.put_len(self.blocks.len())?;
        for b in &self.blocks {
            let bytes = b.canonical_encode()?;
            w.put_bytes(&bytes)?;
        }
        Ok(())
    }

    fn decode_from(r: &mut Reader<'_>) -> CodecResult<Self> {
        let index = r.get_u64()?;
        let blocks = decode_list(r, BLOCK_HEADER_LEN + 4, |r| {
            let bytes = r.get_bytes()?;
            Block::canonical_decode(&bytes).map(Arc::new)
        })?;
        Superblock::new(index, blocks).map_err(|_| CodecError::Malformed("superblock order"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("need n >= 3f + 1 (n = {n}, f = {f})")]
    TooManyFaults { n: usize, f: usize },
    #[error("proposal threshold must be at least 1")]
    ZeroThreshold,
    #[error("pool capacity {capacity} below proposal threshold {threshold}")]
    PoolTooSmall { capacity: usize, threshold: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n: usize,
    pub f: usize,
    /// Transactions per proposed block.
    pub proposal_threshold: usize,
    /// Pending transactions held before overload drops.
    pub pool_capacity: usize,
    pub max_tx_size: usize,
    pub max_block_gas: u64,
    pub flat_gas_fee: u64,
    pub intrinsic_gas: u64,
    /// Eager validation accepts nonces in `[account nonce, account nonce + window)`.
    pub nonce_window: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n: 4,
            f: 1,
            proposal_threshold: 1500,
            pool_capacity: 15_000,
            max_tx_size: 4096,
            max_block_gas: 30_000_000,
            flat_gas_fee: 0,
            intrinsic_gas: 21,
            nonce_window: 64,
        }
    }
}

impl ChainConfig {
    /// Config for `n` nodes tolerating the largest `f` with `n >= 3f + 1`.
    pub fn for_nodes(n: usize) -> Self {
        Self {
            n,
            f: max_faults(n),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 3 * self.f + 1 {
            return Err(ConfigError::TooManyFaults {
                n: self.n,
                f: self.f,
            });
        }
        if self.proposal_threshold == 0 {
            return Err(ConfigError::ZeroThreshold);
        }
        if self.pool_capacity < self.proposal_threshold {
            return Err(ConfigError::PoolTooSmall {
                capacity: self.pool_capacity,
                threshold: self.proposal_threshold,
            });
        }
        Ok(())
    }
}

pub fn max_faults(n: usize) -> usize {
    n.saturating_sub(1) / 3
}
