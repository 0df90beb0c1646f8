use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::scenario::{PolicerConfig, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    BufferOverflow,
    RandomLoss,
    Policed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    /// `depart_at_us` is when the last bit leaves the bottleneck,
    /// `arrive_at_us` when the packet reaches the receiver.
    Enqueued {
        depart_at_us: u64,
        arrive_at_us: u64,
    },
    Dropped(DropReason),
}

/// Mutable state of the bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub queued_bytes: u64,
    /// Serialization horizon in nanoseconds; kept finer than the clock so that
    /// back-to-back packets do not accumulate rounding error.
    pub busy_until_ns: u64,
    pub policer_tokens: f64,
    pub last_refill_us: u64,
}

impl LinkState {
    pub fn busy_until_us(&self) -> u64 {
        self.busy_until_ns.div_ceil(1000)
    }
}

/// Adds tokens for the time elapsed since the last refill, saturating at the burst size.
pub fn policer_refill(state: &mut LinkState, policer: &PolicerConfig, now_us: u64) {
    debug_assert!(now_us >= state.last_refill_us);
    let elapsed_s = now_us.saturating_sub(state.last_refill_us) as f64 / 1e6;
    state.policer_tokens =
        (state.policer_tokens + policer.rate_bps / 8.0 * elapsed_s).min(policer.burst_bytes);
    state.last_refill_us = now_us;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub offered_packets: u64,
    pub offered_bytes: u64,
    pub enqueued_packets: u64,
    pub enqueued_bytes: u64,
    pub dropped_overflow: u64,
    pub dropped_random: u64,
    pub dropped_policed: u64,
    pub dropped_bytes: u64,
}

/// Single drop-tail bottleneck with propagation delay, i.i.d. loss and an
/// optional token-bucket policer.
#[derive(Debug, Clone)]
pub struct Link {
    bandwidth_bps: f64,
    one_way_delay_us: u64,
    buffer_bytes: u64,
    loss_rate: f64,
    policer: Option<PolicerConfig>,
    state: LinkState,
    // (depart_at_us, bytes) of packets still occupying the buffer
    departures: VecDeque<(u64, u64)>,
    rng: ChaCha8Rng,
    counters: LinkCounters,
}

impl Link {
    /// `rng` should be a stream dedicated to the environment.
    pub fn new(cfg: &ScenarioConfig, rng: ChaCha8Rng) -> Self {
        let policer = cfg.policer;
        Self {
            bandwidth_bps: cfg.bandwidth_bps,
            one_way_delay_us: cfg.one_way_delay_us(),
            buffer_bytes: cfg.buffer_bytes,
            loss_rate: cfg.loss_rate,
            policer,
            state: LinkState {
                queued_bytes: 0,
                busy_until_ns: 0,
                policer_tokens: policer.map_or(0.0, |p| p.burst_bytes),
                last_refill_us: 0,
            },
            departures: VecDeque::new(),
            rng,
            counters: LinkCounters::default(),
        }
    }

    pub fn state(&self) -> &LinkState {
        &self.state
    }

    pub fn counters(&self) -> LinkCounters {
        self.counters
    }

    pub fn buffer_bytes(&self) -> u64 {
        self.buffer_bytes
    }

    pub fn one_way_delay_us(&self) -> u64 {
        self.one_way_delay_us
    }

    /// Releases buffer space for packets that have finished serializing by `now_us`.
    pub fn drain(&mut self, now_us: u64) {
        while let Some(&(depart, bytes)) = self.departures.front() {
            if depart > now_us {
                break;
            }
            self.state.queued_bytes -= bytes;
            self.departures.pop_front();
        }
    }

    pub fn queued_bytes(&mut self, now_us: u64) -> u64 {
        self.drain(now_us);
        self.state.queued_bytes
    }

    fn serialization_ns(&self, pkt_bytes: u64) -> u64 {
        (pkt_bytes as f64 * 8.0 * 1e9 / self.bandwidth_bps).ceil() as u64
    }

    /// Offers a packet to the bottleneck at `now_us`.
    pub fn enqueue(&mut self, pkt_bytes: u64, now_us: u64) -> EnqueueOutcome {
        assert!(pkt_bytes > 0, "empty packet");
        self.drain(now_us);
        self.counters.offered_packets += 1;
        self.counters.offered_bytes += pkt_bytes;

        let outcome = self.admit(pkt_bytes, now_us);
        match outcome {
            Err(reason) => {
                match reason {
                    DropReason::BufferOverflow => self.counters.dropped_overflow += 1,
                    DropReason::RandomLoss => self.counters.dropped_random += 1,
                    DropReason::Policed => self.counters.dropped_policed += 1,
                }
                self.counters.dropped_bytes += pkt_bytes;
                EnqueueOutcome::Dropped(reason)
            }
            Ok(()) => {
                let start_ns = self.state.busy_until_ns.max(now_us * 1000);
                let end_ns = start_ns + self.serialization_ns(pkt_bytes);
                self.state.busy_until_ns = end_ns;
                let depart_at_us = end_ns.div_ceil(1000);
                self.state.queued_bytes += pkt_bytes;
                self.departures.push_back((depart_at_us, pkt_bytes));
                self.counters.enqueued_packets += 1;
                self.counters.enqueued_bytes += pkt_bytes;
                EnqueueOutcome::Enqueued {
                    depart_at_us,
                    arrive_at_us: depart_at_us + self.one_way_delay_us,
                }
            }
        }
    }

    fn admit(&mut self, pkt_bytes: u64, now_us: u64) -> Result<(), DropReason> {
        if self.state.queued_bytes + pkt_bytes > self.buffer_bytes {
            return Err(DropReason::BufferOverflow);
        }
        // Draw unconditionally so the loss stream does not depend on the policer.
        let u: f64 = self.rng.gen();
        if u < self.loss_rate {
            return Err(DropReason::RandomLoss);
        }
        if let Some(p) = self.policer {
            policer_refill(&mut self.state, &p, now_us);
            if self.state.policer_tokens < pkt_bytes as f64 {
                return Err(DropReason::Policed);
            }
            self.state.policer_tokens -= pkt_bytes as f64;
        }
        Ok(())
    }
}
