// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! The state node side of a CollaChain replica.
//!
//! Client transactions are eagerly validated and pooled at the node that
//! receives them, proposed in blocks to consensus, and executed once the
//! superblock containing them commits. Execution runs one block at a time and
//! each block is persisted before the next one starts.

pub mod bridge;
pub mod contracts;
pub mod light_client;
pub mod log;
pub mod membership;
pub mod pool;
pub mod state_node;

pub use bridge::{BridgeCall, BridgeContract, WithdrawRef};
pub use contracts::Contracts;
pub use light_client::{quorum_value, secure_read, ReadError, ReadKey, ReadResponse, ReadService, ReadValue};
pub use log::{BlockRecord, CommitMode, LogRecord, PersistedLog};
pub use membership::{CommitteeRegistry, CommitteeSchedule, MembershipCall, MembershipContract, MembershipError};
pub use pool::{DropReason, TxPool};
pub use state_node::{BlockCommit, CommitError, CommitReport, StateNode};
