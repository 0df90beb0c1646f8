use std::collections::VecDeque;

/// Minimum RTT over samples newer than `now - srtt/2`. Falls back to the most
/// recent sample when the window is empty.
///
/// `samples` are `(timestamp_us, rtt_us)` in arrival order and must be non-empty.
pub fn rtt_standing<'a>(
    samples: impl IntoIterator<Item = &'a (u64, f64)>,
    srtt_us: f64,
    now_us: u64,
) -> f64 {
    let horizon = now_us as f64 - srtt_us / 2.0;
    let mut min: Option<f64> = None;
    let mut latest: Option<f64> = None;
    for &(t, rtt) in samples {
        latest = Some(rtt);
        if t as f64 > horizon {
            min = Some(min.map_or(rtt, |m: f64| m.min(rtt)));
        }
    }
    min.or(latest)
        .expect("rtt_standing needs at least one RTT sample")
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RttMinPolicy {
    /// Running minimum since the start of the episode.
    #[default]
    SinceEpisode,
    /// Minimum over a trailing window of this many microseconds.
    Windowed { window_us: u64 },
}

/// Tracks `rtt_min` under either policy.
#[derive(Debug, Clone)]
pub struct RttMinTracker {
    policy: RttMinPolicy,
    running: Option<f64>,
    // monotone deque of (timestamp, rtt) with increasing rtt, for the windowed policy
    window: VecDeque<(u64, f64)>,
}

impl RttMinTracker {
    pub fn new(policy: RttMinPolicy) -> Self {
        Self {
            policy,
            running: None,
            window: VecDeque::new(),
        }
    }

    pub fn policy(&self) -> RttMinPolicy {
        self.policy
    }

    /// Feeds a sample taken at `now_us` and returns the current minimum.
    pub fn update(&mut self, rtt: f64, now_us: u64) -> f64 {
        debug_assert!(rtt > 0.0);
        match self.policy {
            RttMinPolicy::SinceEpisode => {
                let m = self.running.map_or(rtt, |m| m.min(rtt));
                self.running = Some(m);
                m
            }
            RttMinPolicy::Windowed { window_us } => {
                while self.window.back().is_some_and(|&(_, v)| v >= rtt) {
                    self.window.pop_back();
                }
                self.window.push_back((now_us, rtt));
                let cutoff = now_us.saturating_sub(window_us);
                while self.window.front().is_some_and(|&(t, _)| t < cutoff) {
                    self.window.pop_front();
                }
                self.window.front().map(|&(_, v)| v).unwrap_or(rtt)
            }
        }
    }

    pub fn current(&self) -> Option<f64> {
        match self.policy {
            RttMinPolicy::SinceEpisode => self.running,
            RttMinPolicy::Windowed { .. } => self.window.front().map(|&(_, v)| v),
        }
    }
}

/// Number of ACKs kept by the rolling throughput estimator.
pub const THROUGHPUT_WINDOW_ACKS: usize = 10;
/// Lower bound on the estimator's window duration.
pub const MIN_THROUGHPUT_WINDOW_US: u64 = 100_000;

/// Rolling throughput over the last ten ACKs with linear decay after silence.
#[derive(Debug, Clone, Default)]
pub struct ThroughputEstimator {
    ring: VecDeque<(u64, u64)>,
    ring_bytes: u64,
}

impl ThroughputEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_ack(&mut self, now_us: u64, acked_bytes: u64) {
        if self.ring.len() == THROUGHPUT_WINDOW_ACKS {
            let (_, b) = self.ring.pop_front().unwrap();
            self.ring_bytes -= b;
        }
        self.ring.push_back((now_us, acked_bytes));
        self.ring_bytes += acked_bytes;
    }

    /// Current window duration `T` in microseconds (at least 100 ms).
    pub fn window_us(&self) -> u64 {
        match (self.ring.front(), self.ring.back()) {
            (Some(&(first, _)), Some(&(last, _))) => (last - first).max(MIN_THROUGHPUT_WINDOW_US),
            _ => MIN_THROUGHPUT_WINDOW_US,
        }
    }

    /// Estimate in MB/s at `now_us`.
    pub fn estimate(&self, now_us: u64) -> f64 {
        let Some(&(last, _)) = self.ring.back() else {
            return 0.0;
        };
        let window = self.window_us() as f64;
        let base = self.ring_bytes as f64 / (window / 1e6) / 1e6;
        let silence = now_us.saturating_sub(last) as f64;
        if silence > window {
            base * ((2.0 * window - silence) / window).max(0.0)
        } else {
            base
        }
    }
}
