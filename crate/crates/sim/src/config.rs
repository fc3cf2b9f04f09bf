// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Simulation configuration, loadable from TOML.
//!
//! ```toml
//! seed = 7
//! n = 4
//! f = 1
//! endpoints = ["10.0.0.1:7000", "10.0.0.2:7000", "10.0.0.3:7000", "10.0.0.4:7000"]
//! gst = 2_000_000          # default 0; past `duration` the whole run is asynchronous
//! duration = 10_000_000
//!
//! [delay]
//! min = 1_000
//! max = 80_000
//! distribution = "uniform"
//! delta = 20_000
//!
//! [adversaries]
//! 3 = "equivocate_rb"
//!
//! [workload]
//! kind = "constant_rate"
//! rate = 500
//! duration = 5_000_000
//! ```
//!
//! All times are simulated microseconds.

use std::collections::BTreeMap;
use std::path::Path;

use collachain_core::ChainConfig;
use collachain_node::CommitMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryKind;
use crate::workload::WorkloadKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DelayDistribution {
    #[default]
    Uniform,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayModel {
    pub min: u64,
    pub max: u64,
    pub distribution: DelayDistribution,
    /// Delay bound after GST.
    pub delta: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            min: 1_000,
            max: 20_000,
            distribution: DelayDistribution::Uniform,
            delta: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CommitModeName {
    #[default]
    PerBlock,
    WholeSuperblock,
}

impl From<CommitModeName> for CommitMode {
    fn from(m: CommitModeName) -> Self {
        match m {
            CommitModeName::PerBlock => CommitMode::PerBlock,
            CommitModeName::WholeSuperblock => CommitMode::WholeSuperblock,
        }
    }
}

/// Cost model of the commit pipeline, in simulated microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineCost {
    pub per_tx: u64,
    /// Charged once per log record written.
    pub per_record: u64,
    /// Charged per block for sealing and hashing.
    pub per_block: u64,
}

impl Default for PipelineCost {
    fn default() -> Self {
        Self {
            per_tx: 20,
            per_record: 500,
            per_block: 100,
        }
    }
}

/// How client transactions reach state nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "copies")]
pub enum Routing {
    /// Each sender always talks to the same correct node.
    #[default]
    SenderAffine,
    /// Each transaction goes to this many consecutive nodes.
    FanOut(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    /// Logical endpoints, one per node; generated when empty.
    pub endpoints: Vec<String>,
    pub delay: DelayModel,
    /// Global stabilization time; `None` means never (TOML: set it past `duration`).
    pub gst: Option<u64>,
    #[serde(with = "node_keys")]
    pub adversaries: BTreeMap<u32, AdversaryKind>,
    /// Simulated time budget.
    pub duration: u64,
    /// Event budget; the run stops when either budget is spent.
    pub max_events: u64,
    pub chain: ChainConfig,
    pub commit_mode: CommitModeName,
    pub pipeline: PipelineCost,
    /// First binary agreement round timeout; doubles each round. About twice
    /// the post-GST delay bound.
    pub timeout_base: u64,
    /// Propose whatever is pooled as soon as the previous own block is
    /// included; otherwise wait for a full block of `proposal_threshold`.
    pub flush_partial: bool,
    pub routing: Routing,
    /// Light-client reads issued this often.
    pub read_interval: Option<u64>,
    /// Accounts funded at genesis.
    pub accounts: u64,
    pub genesis_balance: u64,
    /// Keep the full event trace in the result.
    pub record_trace: bool,
    pub workload: WorkloadKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 4,
            f: 1,
            endpoints: Vec::new(),
            delay: DelayModel::default(),
            gst: Some(0),
            adversaries: BTreeMap::new(),
            duration: 10_000_000,
            max_events: 50_000_000,
            chain: ChainConfig::for_nodes(4),
            commit_mode: CommitModeName::PerBlock,
            pipeline: PipelineCost::default(),
            timeout_base: 40_000,
            flush_partial: true,
            routing: Routing::SenderAffine,
            read_interval: None,
            accounts: 1_000,
            genesis_balance: 1_000_000_000,
            record_trace: false,
            workload: WorkloadKind::ConstantRate {
                rate: 200,
                duration: 5_000_000,
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl SimConfig {
    /// A configuration for `n` nodes tolerating the maximum `f`.
    pub fn for_nodes(n: usize) -> Self {
        let chain = ChainConfig::for_nodes(n);
        Self {
            n,
            f: chain.f,
            chain,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: SimConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        cfg.chain.n = cfg.n;
        cfg.chain.f = cfg.f;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Invalid(s));
        if self.n == 0 || self.n < 3 * self.f + 1 {
            return bad(format!("need n > 3f (n = {}, f = {})", self.n, self.f));
        }
        if self.adversaries.len() > self.f {
            return bad(format!("{} adversaries exceed f = {}", self.adversaries.len(), self.f));
        }
        if let Some(id) = self.adversaries.keys().find(|id| **id as usize >= self.n) {
            return bad(format!("adversary {id} is not a node"));
        }
        if !self.endpoints.is_empty() && self.endpoints.len() != self.n {
            return bad(format!("{} endpoints for {} nodes", self.endpoints.len(), self.n));
        }
        if self.delay.min > self.delay.max {
            return bad("delay.min exceeds delay.max".into());
        }
        if let Routing::FanOut(k) = self.routing {
            if k == 0 || k > self.n {
                return bad(format!("fan-out {k} outside 1..={}", self.n));
            }
        }
        if self.chain.n != self.n || self.chain.f != self.f {
            return bad("chain.n/chain.f must match n/f".into());
        }
        self.chain.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn endpoint_list(&self) -> Vec<String> {
        if self.endpoints.is_empty() {
            (0..self.n).map(|i| format!("node{i}:7000")).collect()
        } else {
            self.endpoints.clone()
        }
    }
}

/// TOML table keys are strings; node ids are written as decimal keys.
mod node_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::adversary::AdversaryKind;

    pub fn serialize<S: Serializer>(map: &BTreeMap<u32, AdversaryKind>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, AdversaryKind>, D::Error> {
        BTreeMap::<String, AdversaryKind>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(|_| D::Error::custom(format!("node id {k:?}"))))
            .collect()
    }
}
