// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

use collachain_core::{AccountId, ContractHost, Transaction, WorldState};

use crate::bridge::BridgeContract;
use crate::membership::MembershipContract;

/// The built-in contracts of one chain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Contracts {
    pub membership: Option<MembershipContract>,
    pub bridge: BridgeContract,
}

impl ContractHost for Contracts {
    fn handles(&self, account: AccountId) -> bool {
        account == AccountId::BRIDGE || (account == AccountId::MEMBERSHIP && self.membership.is_some())
    }

    fn call(&mut self, tx: &Transaction, state: &mut WorldState) -> Result<(), ()> {
        match tx.recipient {
            Some(AccountId::BRIDGE) => self.bridge.call(tx, state),
            Some(AccountId::MEMBERSHIP) => match &mut self.membership {
                Some(m) => m.call(tx, state).map_err(|_| ()),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}
