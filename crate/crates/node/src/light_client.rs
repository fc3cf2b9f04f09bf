// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Reads without a local chain: ask `2f + 1` nodes and accept a value only
//! if `f + 1` of them agree on `(height, state_digest, value)`. At most `f`
//! responders are byzantine, so such a group always contains a correct node.

use std::collections::BTreeMap;

use collachain_core::{Account, AccountId, Digest, NodeId};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReadKey {
    Account(AccountId),
    Payload(AccountId, u64),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReadValue {
    Account(Account),
    Payload(Option<Vec<u8>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReadResponse {
    pub height: u64,
    pub state_digest: Digest,
    pub value: ReadValue,
    pub responder: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadError {
    #[error("need {needed} distinct responders, got {got}")]
    TooFewResponders { needed: usize, got: usize },
    #[error("no f + 1 responses agree")]
    NoQuorum,
}

/// A node answering light-client reads.
pub trait ReadService {
    fn id(&self) -> NodeId;
    fn read(&self, key: ReadKey) -> ReadResponse;
}

/// The agreed response among `responses`, counting each responder once
/// (its first response).
pub fn quorum_value(responses: &[ReadResponse], f: usize) -> Result<ReadResponse, ReadError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut groups: BTreeMap<(u64, Digest, &ReadValue), Vec<&ReadResponse>> = BTreeMap::new();
    for r in responses {
        if seen.insert(r.responder) {
            groups.entry((r.height, r.state_digest, &r.value)).or_default().push(r);
        }
    }
    let needed = 2 * f + 1;
    if seen.len() < needed {
        return Err(ReadError::TooFewResponders {
            needed,
            got: seen.len(),
        });
    }
    // With 2f + 1 responders at most one group can reach f + 1 unless some
    // responders beyond 2f + 1 were supplied; prefer the highest height then.
    groups
        .into_iter()
        .rev()
        .find(|(_, v)| v.len() > f)
        .map(|(_, v)| v[0].clone())
        .ok_or(ReadError::NoQuorum)
}

/// Query the first `2f + 1` distinct services.
pub fn secure_read<S: ReadService + ?Sized>(
    key: ReadKey,
    nodes: &[&S],
    f: usize,
) -> Result<ReadResponse, ReadError> {
    let mut chosen = std::collections::BTreeSet::new();
    let responses: Vec<ReadResponse> = nodes
        .iter()
        .filter(|n| chosen.insert(n.id()))
        .take(2 * f + 1)
        .map(|n| n.read(key))
        .collect();
    quorum_value(&responses, f)
}
