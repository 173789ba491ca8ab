/*
Copyright 2026 The isru-teleop Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Tick-quantized delay channel with jitter and loss.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::message::LinkMessage;
use crate::LinkError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// One-way delay (s).
    pub delay_each_way: f64,
    /// Uniform half-width (s).
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub loss_probability: f64,
    /// Hz.
    pub tick_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            delay_each_way: 0.0,
            jitter: 0.0,
            loss_probability: 0.0,
            tick_rate: 100.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn with_delay(delay_each_way: f64) -> Self {
        Self {
            delay_each_way,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |field: &str, why: &str| Err(LinkError::InvalidConfig(format!("{field}: {why}")));
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            return bad("tick_rate", "must be positive");
        }
        if !(self.delay_each_way.is_finite() && self.delay_each_way >= 0.0) {
            return bad("delay_each_way", "must be non-negative");
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return bad("jitter", "must be non-negative");
        }
        if self.jitter > self.delay_each_way {
            return bad("jitter", "must not exceed delay_each_way");
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return bad("loss_probability", "must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn delay_ticks(&self) -> u64 {
        (self.delay_each_way * self.tick_rate).round() as u64
    }

    pub fn jitter_ticks(&self) -> u64 {
        (self.jitter * self.tick_rate).round() as u64
    }

    pub fn tick_to_time(&self, tick: u64) -> f64 {
        tick as f64 / self.tick_rate
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub max_in_flight: u64,
}

/// One direction of the link. Messages are held until their delivery tick.
#[derive(Clone, Debug)]
pub struct DelayChannel {
    config: ChannelConfig,
    delay_ticks: u64,
    jitter_ticks: u64,
    // (deliver_tick, seq, push order)
    queue: BTreeMap<(u64, u64, u64), LinkMessage>,
    pushes: u64,
    rng: ChaCha8Rng,
    stats: LinkStats,
}

impl DelayChannel {
    pub fn new(config: ChannelConfig) -> Result<Self, LinkError> {
        config.validate()?;
        Ok(Self {
            delay_ticks: config.delay_ticks(),
            jitter_ticks: config.jitter_ticks(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            queue: BTreeMap::new(),
            pushes: 0,
            stats: LinkStats::default(),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn delay_ticks(&self) -> u64 {
        self.delay_ticks
    }

    /// Schedules `msg` for delivery, or drops it. Returns the delivery tick.
    pub fn push(&mut self, msg: LinkMessage, now_tick: u64) -> Option<u64> {
        self.stats.sent += 1;
        // Loss and jitter are drawn on every push.
        let lost = self.rng.random::<f64>() < self.config.loss_probability;
        let j = self.jitter_ticks as i64;
        let offset = if j > 0 { self.rng.random_range(-j..=j) } else { 0 };
        if lost {
            self.stats.dropped += 1;
            return None;
        }
        let deliver = (now_tick + self.delay_ticks).saturating_add_signed(offset).max(now_tick);
        self.queue.insert((deliver, msg.seq, self.pushes), msg);
        self.pushes += 1;
        self.stats.in_flight = self.queue.len() as u64;
        self.stats.max_in_flight = self.stats.max_in_flight.max(self.stats.in_flight);
        Some(deliver)
    }

    /// Everything due at or before `now_tick`, ordered by delivery tick then seq.
    pub fn poll(&mut self, now_tick: u64) -> Vec<LinkMessage> {
        let later = self.queue.split_off(&(now_tick + 1, 0, 0));
        let due = std::mem::replace(&mut self.queue, later);
        self.stats.delivered += due.len() as u64;
        self.stats.in_flight = self.queue.len() as u64;
        due.into_values().collect()
    }

    pub fn next_delivery(&self) -> Option<u64> {
        self.queue.keys().next().map(|k| k.0)
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }
}

/// Assigns strictly increasing seq numbers and sender timestamps.
#[derive(Clone, Debug)]
pub struct Stamper {
    next_seq: u64,
    tick_rate: f64,
}

impl Stamper {
    pub fn new(tick_rate: f64) -> Self {
        Self { next_seq: 0, tick_rate }
    }

    pub fn stamp(&mut self, kind: crate::message::MessageKind, now_tick: u64) -> LinkMessage {
        let seq = self.next_seq;
        self.next_seq += 1;
        LinkMessage {
            seq,
            timestamp: now_tick as f64 / self.tick_rate,
            kind,
        }
    }
}
