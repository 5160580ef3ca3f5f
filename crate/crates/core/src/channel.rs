//! Simulated one-way link with latency, jitter, loss and scripted outages.
//!
//! The channel is a passive queue: endpoints call [`DelayChannel::send`] and
//! [`DelayChannel::poll`] at their own ticks. Randomness comes from a seeded
//! ChaCha stream so a given send schedule always produces the same delivery
//! schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// One-way latency (s).
    #[serde(default)]
    pub delay: f64,
    /// Upper bound of the extra uniform latency (s).
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub drop_prob: f64,
    /// Latest-wins delivery: envelopes older than one already delivered are
    /// discarded.
    #[serde(default = "yes")]
    pub ordered: bool,
    /// Overrides the scenario seed for this link.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn yes() -> bool {
    true
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            delay: 0.0,
            jitter: 0.0,
            drop_prob: 0.0,
            ordered: true,
            seed: None,
        }
    }
}

impl LinkConfig {
    pub fn with_delay(delay: f64) -> Self {
        LinkConfig {
            delay,
            ..LinkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay.is_finite() && self.delay >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "delay must be >= 0, got {}",
                self.delay
            )));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "jitter must be >= 0, got {}",
                self.jitter
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::InvalidParams(format!(
                "drop_prob must be in [0, 1], got {}",
                self.drop_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<T> {
    pub payload: T,
    pub t_send: f64,
    pub t_deliver: f64,
    pub seq: u64,
}

/// Fate of every envelope handed to the channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub stale: u64,
    pub dead_link: u64,
    pub in_flight: u64,
}

impl ChannelStats {
    /// Every sent envelope is accounted for exactly once.
    pub fn reconciles(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.stale + self.dead_link + self.in_flight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "t", rename_all = "snake_case")]
pub enum LinkEvent {
    DisconnectAt(f64),
    ReconnectAt(f64),
}

impl LinkEvent {
    pub fn time(&self) -> f64 {
        match self {
            LinkEvent::DisconnectAt(t) | LinkEvent::ReconnectAt(t) => *t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DelayChannel<T> {
    cfg: LinkConfig,
    rng: ChaCha8Rng,
    queue: Vec<Envelope<T>>,
    next_seq: u64,
    last_delivered: Option<u64>,
    /// Outage windows `[from, until)`; `until = None` means still down.
    outages: Vec<(f64, Option<f64>)>,
    last_event: f64,
    stats: ChannelStats,
}

impl<T> DelayChannel<T> {
    pub fn new(cfg: LinkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(DelayChannel {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(seed)),
            cfg,
            queue: Vec::new(),
            next_seq: 0,
            last_delivered: None,
            outages: Vec::new(),
            last_event: f64::NEG_INFINITY,
            stats: ChannelStats::default(),
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn stats(&self) -> ChannelStats {
        ChannelStats {
            in_flight: self.queue.len() as u64,
            ..self.stats
        }
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn set_delay(&mut self, delay: f64) -> Result<()> {
        let cfg = LinkConfig { delay, ..self.cfg };
        cfg.validate()?;
        self.cfg = cfg;
        Ok(())
    }

    pub fn is_connected(&self, t: f64) -> bool {
        !self
            .outages
            .iter()
            .any(|&(from, until)| t >= from && until.is_none_or(|u| t < u))
    }

    /// Schedules a disconnection or reconnection. Event times must not go
    /// backwards.
    pub fn set_link_state(&mut self, event: LinkEvent) -> Result<()> {
        let t = event.time();
        if !t.is_finite() || t < self.last_event {
            return Err(Error::InvalidParams(format!(
                "link events must be non-decreasing, got {t} after {}",
                self.last_event
            )));
        }
        self.last_event = t;
        match event {
            LinkEvent::DisconnectAt(t) => {
                if self.outages.last().is_none_or(|o| o.1.is_some()) {
                    self.outages.push((t, None));
                }
            }
            LinkEvent::ReconnectAt(t) => {
                if let Some(open) = self.outages.last_mut().filter(|o| o.1.is_none()) {
                    open.1 = Some(t);
                }
            }
        }
        Ok(())
    }

    /// Hands `payload` to the link at `t_now`. Silently discarded while the
    /// link is down or when the loss draw says so.
    pub fn send(&mut self, payload: T, t_now: f64) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.stats.sent += 1;
        if !self.is_connected(t_now) {
            self.stats.dead_link += 1;
            return;
        }
        if self.cfg.drop_prob > 0.0 && self.rng.random_bool(self.cfg.drop_prob) {
            self.stats.dropped += 1;
            return;
        }
        let extra = if self.cfg.jitter > 0.0 {
            self.rng.random_range(0.0..=self.cfg.jitter)
        } else {
            0.0
        };
        self.queue.push(Envelope {
            payload,
            t_send: t_now,
            t_deliver: t_now + self.cfg.delay + extra,
            seq,
        });
    }

    /// Removes and returns every envelope due at `t_now` (inclusive), in
    /// sequence order.
    pub fn poll(&mut self, t_now: f64) -> Vec<Envelope<T>> {
        if self.queue.is_empty() {
            return Vec::new();
        }
        let (mut due, pending): (Vec<_>, Vec<_>) = std::mem::take(&mut self.queue)
            .into_iter()
            .partition(|e| e.t_deliver <= t_now);
        self.queue = pending;
        due.sort_by_key(|e| e.seq);
        let mut out = Vec::with_capacity(due.len());
        for env in due {
            if self.cfg.ordered && self.last_delivered.is_some_and(|last| env.seq < last) {
                self.stats.stale += 1;
                continue;
            }
            self.last_delivered = Some(env.seq);
            self.stats.delivered += 1;
            out.push(env);
        }
        out
    }
}
