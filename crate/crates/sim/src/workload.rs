// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Timestamped client transaction streams.
//!
//! Senders are drawn round-robin from `accounts`, each with consecutive
//! nonces, and every transaction is signed. The burst profile models a
//! release-event spike: a baseline at `peak / 40` and a triangular 3 s spike
//! rising to `peak = 143_000 * scale` transactions per second, with 140-byte
//! message payloads.

use std::path::Path;

use collachain_core::{AccountId, SignatureScheme, Transaction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FULL_SCALE_PEAK_TPS: f64 = 143_000.0;
pub const BURST_PAYLOAD: usize = 140;
const SPIKE_WIDTH_US: u64 = 3_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadTx {
    /// Submission time, simulated microseconds.
    pub at: u64,
    pub tx: Transaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WorkloadKind {
    /// `rate` transactions per second for `duration` microseconds.
    ConstantRate { rate: u64, duration: u64 },
    /// Burst profile over `duration` microseconds with the spike starting at
    /// `spike_at`.
    TwitterBurst { scale: f64, duration: u64, spike_at: u64 },
    /// `count` transactions per sender all submitted at time 0.
    Preload { per_sender: u64 },
    Replay { path: String },
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("workload file {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("workload file {path}: bad payload hex in row {row}")]
    Payload { path: String, row: usize },
}

/// One recorded transaction; the replay file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedTx {
    pub at_us: u64,
    pub sender: u64,
    pub recipient: u64,
    pub amount: u64,
    pub payload_hex: String,
}

struct Builder<'a> {
    accounts: u64,
    nonces: Vec<u64>,
    next_sender: u64,
    scheme: &'a dyn SignatureScheme,
    payload_len: usize,
}

impl<'a> Builder<'a> {
    fn new(accounts: u64, scheme: &'a dyn SignatureScheme, payload_len: usize) -> Self {
        Self {
            accounts: accounts.max(2),
            nonces: vec![0; accounts.max(2) as usize],
            next_sender: 0,
            scheme,
            payload_len,
        }
    }

    fn make(&mut self, at: u64) -> WorkloadTx {
        let s = self.next_sender;
        self.next_sender = (s + 1) % self.accounts;
        let nonce = self.nonces[s as usize];
        self.nonces[s as usize] += 1;
        let recipient = (s + 1) % self.accounts;
        let mut payload = vec![0u8; self.payload_len];
        for (i, b) in payload.iter_mut().enumerate() {
            *b = b'a' + ((s as usize + nonce as usize + i) % 26) as u8;
        }
        let tx = Transaction::unsigned(AccountId(s), Some(AccountId(recipient)), nonce, 1, 21, payload)
            .signed(self.scheme);
        WorkloadTx { at, tx }
    }
}

pub fn generate_workload(
    kind: &WorkloadKind,
    accounts: u64,
    scheme: &dyn SignatureScheme,
) -> Result<Vec<WorkloadTx>, WorkloadError> {
    Ok(match kind {
        WorkloadKind::ConstantRate { rate, duration } => constant_rate(*rate, *duration, accounts, scheme),
        WorkloadKind::TwitterBurst {
            scale,
            duration,
            spike_at,
        } => twitter_burst(*scale, *duration, *spike_at, accounts, scheme),
        WorkloadKind::Preload { per_sender } => {
            let mut b = Builder::new(accounts, scheme, 0);
            (0..per_sender * b.accounts).map(|_| b.make(0)).collect()
        }
        WorkloadKind::Replay { path } => replay(Path::new(path), scheme)?,
    })
}

pub fn constant_rate(rate: u64, duration: u64, accounts: u64, scheme: &dyn SignatureScheme) -> Vec<WorkloadTx> {
    let count = (rate as u128 * duration as u128 / 1_000_000) as u64;
    let mut b = Builder::new(accounts, scheme, 0);
    (0..count)
        .map(|i| b.make((i as u128 * 1_000_000 / rate as u128) as u64))
        .collect()
}

/// Instantaneous burst rate in transactions per second at time `t`.
pub fn burst_rate(scale: f64, spike_at: u64, t: u64) -> f64 {
    let peak = FULL_SCALE_PEAK_TPS * scale;
    let base = peak / 40.0;
    let half = SPIKE_WIDTH_US / 2;
    let centre = spike_at + half;
    let dist = t.abs_diff(centre);
    if t < spike_at || dist >= half {
        base
    } else {
        base + (peak - base) * (1.0 - dist as f64 / half as f64)
    }
}

pub fn twitter_burst(
    scale: f64,
    duration: u64,
    spike_at: u64,
    accounts: u64,
    scheme: &dyn SignatureScheme,
) -> Vec<WorkloadTx> {
    const STEP: u64 = 1_000;
    let mut b = Builder::new(accounts, scheme, BURST_PAYLOAD);
    let mut out = Vec::new();
    let mut owed = 0.0f64;
    let mut t = 0;
    while t < duration {
        owed += burst_rate(scale, spike_at, t) * STEP as f64 / 1e6;
        let whole = owed.floor();
        owed -= whole;
        let k = whole as u64;
        for j in 0..k {
            out.push(b.make(t + j * STEP / k.max(1)));
        }
        t += STEP;
    }
    out
}

pub fn replay(path: &Path, scheme: &dyn SignatureScheme) -> Result<Vec<WorkloadTx>, WorkloadError> {
    let err = |source| WorkloadError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(err)?;
    let mut nonces = std::collections::HashMap::<u64, u64>::new();
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<RecordedTx>().enumerate() {
        let rec = rec.map_err(err)?;
        let payload = decode_hex(&rec.payload_hex).ok_or(WorkloadError::Payload {
            path: path.display().to_string(),
            row,
        })?;
        let nonce = nonces.entry(rec.sender).or_default();
        let tx = Transaction::unsigned(AccountId(rec.sender), Some(AccountId(rec.recipient)), *nonce, rec.amount, 21, payload)
            .signed(scheme);
        *nonce += 1;
        out.push(WorkloadTx { at: rec.at_us, tx });
    }
    out.sort_by_key(|w| w.at);
    Ok(out)
}

pub fn write_recording(path: &Path, stream: &[WorkloadTx]) -> Result<(), WorkloadError> {
    let err = |source| WorkloadError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for item in stream {
        w.serialize(RecordedTx {
            at_us: item.at,
            sender: item.tx.sender.0,
            recipient: item.tx.recipient.map_or(0, |r| r.0),
            amount: item.tx.amount,
            payload_hex: item.tx.payload.iter().map(|b| format!("{b:02x}")).collect(),
        })
        .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

fn decode_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}
