// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Pluggable transaction signatures.

use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::digest::Hasher;
use crate::types::AccountId;

pub trait SignatureScheme: Send + Sync {
    fn sign(&self, signer: AccountId, message: &[u8]) -> Vec<u8>;
    fn verify(&self, signer: AccountId, message: &[u8], signature: &[u8]) -> bool;
}

/// Deterministic keyed MAC: HMAC-SHA256 under a per-account key derived from
/// a shared master secret. Anyone holding the master can sign for any
/// account, which is exactly what a simulator needs and nothing more.
#[derive(Clone)]
pub struct KeyedMac {
    master: [u8; 32],
}

impl KeyedMac {
    pub fn new(master: [u8; 32]) -> Self {
        Self { master }
    }

    fn account_key(&self, account: AccountId) -> [u8; 32] {
        let mut h = Hasher::new();
        h.update(&self.master);
        h.update(&account.0.to_le_bytes());
        h.finish().0
    }

    fn mac(&self, account: AccountId) -> Hmac<Sha256> {
        Hmac::<Sha256>::new_from_slice(&self.account_key(account)).expect("any key length")
    }
}

impl Default for KeyedMac {
    fn default() -> Self {
        Self::new(crate::digest::digest_of(b"collachain/test-mac/v1").0)
    }
}

impl SignatureScheme for KeyedMac {
    fn sign(&self, signer: AccountId, message: &[u8]) -> Vec<u8> {
        let mut mac = self.mac(signer);
        mac.update(message);
        mac.finalize().into_bytes().to_vec()
    }

    fn verify(&self, signer: AccountId, message: &[u8], signature: &[u8]) -> bool {
        let mut mac = self.mac(signer);
        mac.update(message);
        mac.verify_slice(signature).is_ok()
    }
}
