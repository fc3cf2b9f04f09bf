// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Run metrics. Latencies are simulated time from submission to commit at
//! the node the client submitted to.

use std::collections::BTreeMap;

use collachain_core::{Digest, ValidationCounters};
use serde::Serialize;

/// Width of a throughput bucket.
pub const BUCKET_US: u64 = 1_000_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    pub commit_mode: String,
    pub submitted: u64,
    pub committed: u64,
    pub dropped: u64,
    pub pending: u64,
    pub drops: BTreeMap<String, u64>,
    /// Committed transactions per second, per bucket of [`BUCKET_US`].
    pub throughput: Vec<f64>,
    /// Sorted submit-to-commit latencies in microseconds.
    #[serde(skip)]
    pub latencies_us: Vec<u64>,
    pub tps_mean: f64,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
    pub validations: Vec<ValidationCounters>,
    /// Blocks per superblock at the reference node, by index.
    pub cardinality: Vec<usize>,
    pub messages: BTreeMap<String, u64>,
    /// Largest liveness lag observed, in consensus instances.
    pub max_commit_lag: u64,
    pub height: u64,
    pub state_digest: String,
    pub end_time: u64,
    pub events: u64,
}

impl RunMetrics {
    pub fn superblock_mean_blocks(&self) -> f64 {
        if self.cardinality.is_empty() {
            return 0.0;
        }
        self.cardinality.iter().sum::<usize>() as f64 / self.cardinality.len() as f64
    }

    pub(crate) fn set_latencies(&mut self, mut lat: Vec<u64>) {
        lat.sort_unstable();
        let secs = |p| percentile(&lat, p).map(|v| v as f64 / 1e6);
        self.p50 = secs(50.0);
        self.p90 = secs(90.0);
        self.p99 = secs(99.0);
        self.latencies_us = lat;
    }

    pub(crate) fn set_digest(&mut self, d: Digest) {
        self.state_digest = d.to_hex();
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Bucketed rates from commit times.
pub fn throughput_series(commit_times: &[u64]) -> Vec<f64> {
    let Some(last) = commit_times.iter().max() else {
        return Vec::new();
    };
    let mut buckets = vec![0u64; (last / BUCKET_US + 1) as usize];
    for t in commit_times {
        buckets[(t / BUCKET_US) as usize] += 1;
    }
    let scale = 1e6 / BUCKET_US as f64;
    buckets.into_iter().map(|c| c as f64 * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<u64> = (1..=10).collect();
        assert_eq!(percentile(&v, 50.0), Some(5));
        assert_eq!(percentile(&v, 90.0), Some(9));
        assert_eq!(percentile(&v, 99.0), Some(10));
        assert_eq!(percentile(&[7], 1.0), Some(7));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn buckets() {
        assert_eq!(throughput_series(&[0, 10, 999_999, 2_500_000]), vec![3.0, 0.0, 1.0]);
        assert!(throughput_series(&[]).is_empty());
    }
}
