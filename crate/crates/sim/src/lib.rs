// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic simulation of CollaChain networks: partial synchrony,
//! byzantine behaviours, a continuous safety monitor, workloads, metrics,
//! reports, sharding and bounded exhaustive schedule exploration.

pub mod adversary;
pub mod config;
pub mod engine;
pub mod explorer;
pub mod metrics;
pub mod monitor;
pub mod network;
pub mod report;
pub mod sharding;
pub mod slowdown;
pub mod trace;
pub mod workload;

pub use adversary::AdversaryKind;
pub use config::{DelayDistribution, DelayModel, PipelineCost, Routing, SimConfig};
pub use engine::{run_simulation, run_with_workload, ChainSetup, SimError, SimOutput, Simulation};
pub use metrics::RunMetrics;
pub use monitor::{Violation, ViolationKind};
pub use slowdown::{slowdown_model, Slowdown, SlowdownError};
pub use workload::{generate_workload, WorkloadKind, WorkloadTx};
