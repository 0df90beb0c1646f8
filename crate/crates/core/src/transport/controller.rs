use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{MAX_CWND, MIN_CWND};
use crate::error::RunError;
use crate::features::{ObservationRecord, StateVector};
use crate::neuralnet::HiddenState;

/// What a controller sees at a step boundary.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub step: usize,
    pub state: &'a StateVector,
    /// Reward of the window that produced `state`.
    pub reward: f64,
    pub cwnd_mss: u32,
}

/// An action chosen at a step boundary along with the policy outputs it was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action_index: usize,
    pub logits: Vec<f64>,
}

/// Congestion controller driven by the episode harness.
///
/// Classical controllers react per ACK/loss and return a new window; step-level
/// agents return a [`Decision`] every step interval and leave the per-packet
/// callbacks at their defaults. Windows returned from callbacks are clipped to
/// [2, 2000] MSS by the sender.
pub trait CongestionController: Send {
    fn name(&self) -> &str;

    fn on_ack(&mut self, _rec: &ObservationRecord, _cwnd_mss: u32, _now_us: u64) -> Option<u32> {
        None
    }

    fn on_loss(&mut self, _rec: &ObservationRecord, _cwnd_mss: u32, _now_us: u64) -> Option<u32> {
        None
    }

    fn select_action(&mut self, _input: &StepInput<'_>) -> Result<Option<Decision>, RunError> {
        Ok(None)
    }

    /// Recurrent state at the start of the episode, for recurrent agents.
    fn initial_hidden(&self) -> Option<HiddenState<f64>> {
        None
    }
}

/// Holds the window at a constant size.
#[derive(Debug, Clone)]
pub struct FixedCwnd {
    cwnd: u32,
}

impl FixedCwnd {
    pub fn new(cwnd_mss: u32) -> Self {
        Self {
            cwnd: cwnd_mss.clamp(MIN_CWND, MAX_CWND),
        }
    }
}

impl CongestionController for FixedCwnd {
    fn name(&self) -> &str {
        "fixed"
    }

    fn on_ack(&mut self, _rec: &ObservationRecord, cwnd: u32, _now: u64) -> Option<u32> {
        (cwnd != self.cwnd).then_some(self.cwnd)
    }
}

/// Reno-style AIMD: slow start to ssthresh, +1 MSS per window afterwards,
/// halve once per round trip on loss, collapse to the floor on timeouts and
/// persistent congestion.
#[derive(Debug, Clone)]
pub struct AimdReno {
    ssthresh: u32,
    acked_in_ca: u64,
    recovery_until_us: u64,
    mss: u32,
}

impl AimdReno {
    pub fn new(mss: u32) -> Self {
        Self {
            ssthresh: MAX_CWND,
            acked_in_ca: 0,
            recovery_until_us: 0,
            mss,
        }
    }
}

impl CongestionController for AimdReno {
    fn name(&self) -> &str {
        "aimd"
    }

    fn on_ack(&mut self, rec: &ObservationRecord, cwnd: u32, _now: u64) -> Option<u32> {
        let acked_pkts = (rec.acked_bytes / self.mss as f64).round() as u64;
        if acked_pkts == 0 {
            return None;
        }
        let next = if cwnd < self.ssthresh {
            (cwnd as u64 + acked_pkts).min(self.ssthresh as u64) as u32
        } else {
            self.acked_in_ca += acked_pkts;
            let mut c = cwnd;
            while self.acked_in_ca >= c as u64 {
                self.acked_in_ca -= c as u64;
                c += 1;
            }
            c
        };
        let next = next.clamp(MIN_CWND, MAX_CWND);
        (next != cwnd).then_some(next)
    }

    fn on_loss(&mut self, rec: &ObservationRecord, cwnd: u32, now: u64) -> Option<u32> {
        if rec.persistent_congestion > 0.0
            || rec.timeout_based_rtx_count > 0.0 && rec.acked_bytes == 0.0
        {
            self.ssthresh = (cwnd / 2).max(MIN_CWND);
            self.acked_in_ca = 0;
            self.recovery_until_us = now + (rec.srtt * 1000.0) as u64;
            return Some(MIN_CWND);
        }
        if rec.lost_bytes <= 0.0 || now < self.recovery_until_us {
            return None;
        }
        self.ssthresh = (cwnd / 2).max(MIN_CWND);
        self.acked_in_ca = 0;
        self.recovery_until_us = now + (rec.srtt * 1000.0) as u64;
        Some(self.ssthresh)
    }
}

/// Picks a uniformly random action every step ("rl-random").
#[derive(Debug, Clone)]
pub struct RandomAction {
    action_count: usize,
    rng: ChaCha8Rng,
}

impl RandomAction {
    pub fn new(action_count: usize, seed: u64) -> Self {
        assert!(action_count > 0);
        Self {
            action_count,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl CongestionController for RandomAction {
    fn name(&self) -> &str {
        "random"
    }

    fn select_action(&mut self, _input: &StepInput<'_>) -> Result<Option<Decision>, RunError> {
        Ok(Some(Decision {
            action_index: self.rng.gen_range(0..self.action_count),
            logits: vec![0.0; self.action_count],
        }))
    }
}
