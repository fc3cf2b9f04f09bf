// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Partially synchronous delays: arbitrary (sampled) before GST, at most
//! `delta` after it. A message sent at `t` is delivered no later than
//! `max(t, gst) + delta`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DelayDistribution, DelayModel};

#[derive(Debug, Clone)]
pub struct Network {
    model: DelayModel,
    gst: Option<u64>,
}

impl Network {
    pub fn new(model: DelayModel, gst: Option<u64>) -> Self {
        Self { model, gst }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let DelayModel { min, max, .. } = self.model;
        match self.model.distribution {
            DelayDistribution::Uniform => rng.gen_range(min..=max),
            DelayDistribution::Exponential => {
                let mean = ((max - min) / 4).max(1) as f64;
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                (min + (-u.ln() * mean) as u64).min(max)
            }
        }
    }

    /// Delivery time of a message sent at `now`. `slow` requests the worst
    /// delay the model allows.
    pub fn deliver_at(&self, now: u64, rng: &mut ChaCha8Rng, slow: bool) -> u64 {
        let sampled = if slow { self.model.max } else { self.sample(rng) };
        let at = now + sampled.max(1);
        match self.gst {
            Some(gst) => at.min(now.max(gst) + self.model.delta.max(1)),
            None => at,
        }
    }

    pub fn is_synchronous_at(&self, t: u64) -> bool {
        self.gst.is_some_and(|g| t >= g)
    }
}
