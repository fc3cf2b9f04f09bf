// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Shared domain types for CollaChain: transactions, blocks, superblocks,
//! their canonical encoding and digests, pluggable signatures, and the
//! account state machine with eager/lazy validation.

pub mod codec;
pub mod digest;
pub mod execution;
pub mod signature;
pub mod state;
pub mod types;
pub mod validation;

pub use codec::{Canonical, CodecError};
pub use digest::{digest_of, Digest};
pub use execution::{apply_transaction, execute, ContractHost, ExecError, ExecFailure, ExecOutcome, NoContracts};
pub use signature::{KeyedMac, SignatureScheme};
pub use state::{Account, WorldState};
pub use types::{AccountId, Block, BlockError, ChainConfig, ConfigError, NodeId, Superblock, Transaction};
pub use validation::{RejectReason, ValidationCounters, ValidationKind, ValidationVerdict, Validator};
