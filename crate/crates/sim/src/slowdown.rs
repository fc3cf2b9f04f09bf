// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Eager-validation slowdown of a propagating (EVM-style) node relative to a
//! non-propagating one.
//!
//! From a measured per-node eager validation time `delta_sevm` and total
//! time `Delta_sevm` of the non-propagating node:
//!
//! * `beta = Delta_sevm - delta_sevm` is the time spent on everything else,
//! * a propagating node validates every transaction at all `n` nodes, so
//!   `delta_evm = n * delta_sevm` and `Delta_evm = beta + delta_evm`,
//! * the slowdown is `S = (Delta_evm - Delta_sevm) / Delta_sevm`, tending to
//!   `S_limit = delta_evm / beta`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slowdown {
    pub beta: f64,
    pub delta_evm: f64,
    #[serde(rename = "Delta_evm")]
    pub total_evm: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "S_limit")]
    pub s_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlowdownError {
    #[error("bad input: {0}")]
    BadInput(&'static str),
}

pub fn slowdown_model(delta_sevm: f64, total_sevm: f64, n: u64) -> Result<Slowdown, SlowdownError> {
    if n == 0 {
        return Err(SlowdownError::BadInput("n must be at least 1"));
    }
    if !(delta_sevm.is_finite() && total_sevm.is_finite()) || delta_sevm < 0.0 {
        return Err(SlowdownError::BadInput("times must be finite and non-negative"));
    }
    let beta = total_sevm - delta_sevm;
    if beta <= 0.0 {
        return Err(SlowdownError::BadInput("total time must exceed validation time"));
    }
    let delta_evm = n as f64 * delta_sevm;
    let total_evm = beta + delta_evm;
    Ok(Slowdown {
        beta,
        delta_evm,
        total_evm,
        s: (total_evm - total_sevm) / total_sevm,
        s_limit: delta_evm / beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_inputs() {
        assert!(slowdown_model(1.0, 1.0, 4).is_err());
        assert!(slowdown_model(0.1, 1.0, 0).is_err());
        let s = slowdown_model(0.0, 3.0, 9).unwrap();
        assert_eq!((s.s, s.s_limit), (0.0, 0.0));
    }
}
