use std::collections::{BTreeMap, VecDeque};

use crate::control::{INITIAL_CWND, MAX_CWND, MIN_CWND};
use crate::features::{
    rtt_standing, ObservationRecord, RttMinPolicy, RttMinTracker, ThroughputEstimator,
    ThroughputMode,
};

pub const DEFAULT_MSS: u32 = 1460;

/// Knobs of the sender's loss recovery and feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub mss: u32,
    pub initial_cwnd: u32,
    /// A packet is lost once a packet this many numbers later has been acknowledged.
    pub reorder_threshold: u64,
    /// Persistent congestion when the span of a loss burst exceeds this many PTOs.
    pub pc_mult: f64,
    pub granularity_us: f64,
    /// RTT assumed before the first sample.
    pub initial_rtt_us: f64,
    pub rtt_min_policy: RttMinPolicy,
    pub throughput_mode: ThroughputMode,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            mss: DEFAULT_MSS,
            initial_cwnd: INITIAL_CWND,
            reorder_threshold: 3,
            pc_mult: 3.0,
            granularity_us: 1000.0,
            initial_rtt_us: 333_000.0,
            rtt_min_policy: RttMinPolicy::SinceEpisode,
            throughput_mode: ThroughputMode::Rolling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub seq: u64,
    pub bytes: u32,
    pub sent_at_us: u64,
    pub is_rtx: bool,
}

/// Acknowledgement of one or more packet numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckInfo {
    pub seqs: Vec<u64>,
}

impl AckInfo {
    pub fn single(seq: u64) -> Self {
        Self { seqs: vec![seq] }
    }
}

/// Smoothed RTT estimation with the classic 1/8, 1/4 gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttEstimator {
    pub srtt_us: f64,
    pub rttvar_us: f64,
    pub latest_us: f64,
    pub has_sample: bool,
}

impl RttEstimator {
    pub fn new(initial_rtt_us: f64) -> Self {
        Self {
            srtt_us: initial_rtt_us,
            rttvar_us: initial_rtt_us / 2.0,
            latest_us: 0.0,
            has_sample: false,
        }
    }

    pub fn update(&mut self, sample_us: f64) {
        self.latest_us = sample_us;
        if !self.has_sample {
            self.srtt_us = sample_us;
            self.rttvar_us = sample_us / 2.0;
            self.has_sample = true;
        } else {
            self.rttvar_us = 0.75 * self.rttvar_us + 0.25 * (self.srtt_us - sample_us).abs();
            self.srtt_us = 0.875 * self.srtt_us + 0.125 * sample_us;
        }
    }

    /// Base probe timeout without backoff.
    pub fn pto_us(&self, granularity_us: f64) -> f64 {
        self.srtt_us + (4.0 * self.rttvar_us).max(granularity_us)
    }
}

/// Counters reported in each record and zeroed after every ACK.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct SinceAck {
    sent_bytes: u64,
    rtx_bytes: u64,
    rtx_count: u64,
    timeout_rtx_count: u64,
}

/// Episode-level byte accounting used by conservation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderTotals {
    pub sent_bytes: u64,
    pub sent_packets: u64,
    pub acked_bytes: u64,
    pub lost_bytes: u64,
    pub rtx_bytes: u64,
    pub unknown_acks: u64,
    pub pto_expiries: u64,
    pub clamped_delays: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingRtx {
    bytes: u32,
}

/// Window-limited bulk sender with RTT tracking and QUIC-style loss recovery.
#[derive(Debug, Clone)]
pub struct Sender {
    cfg: TransportConfig,
    cwnd_mss: u32,
    next_seq: u64,
    inflight: BTreeMap<u64, Packet>,
    inflight_bytes: u64,
    pending_rtx: VecDeque<PendingRtx>,
    rtt: RttEstimator,
    rtt_min: RttMinTracker,
    standing: VecDeque<(u64, f64)>,
    throughput: ThroughputEstimator,
    since_ack: SinceAck,
    pto_count: u64,
    total_pto_count: u64,
    largest_acked: Option<u64>,
    pto_deadline_us: Option<u64>,
    pto_generation: u64,
    totals: SenderTotals,
}

impl Sender {
    pub fn new(cfg: TransportConfig) -> Self {
        let cwnd = cfg.initial_cwnd.clamp(MIN_CWND, MAX_CWND);
        Self {
            rtt: RttEstimator::new(cfg.initial_rtt_us),
            rtt_min: RttMinTracker::new(cfg.rtt_min_policy),
            cfg,
            cwnd_mss: cwnd,
            next_seq: 1,
            inflight: BTreeMap::new(),
            inflight_bytes: 0,
            pending_rtx: VecDeque::new(),
            standing: VecDeque::new(),
            throughput: ThroughputEstimator::new(),
            since_ack: SinceAck::default(),
            pto_count: 0,
            total_pto_count: 0,
            largest_acked: None,
            pto_deadline_us: None,
            pto_generation: 0,
            totals: SenderTotals::default(),
        }
    }

    pub fn config(&self) -> &TransportConfig {
        &self.cfg
    }

    pub fn cwnd_mss(&self) -> u32 {
        self.cwnd_mss
    }

    pub fn cwnd_bytes(&self) -> u64 {
        self.cwnd_mss as u64 * self.cfg.mss as u64
    }

    /// Sets the window, clipped to [2, 2000] MSS.
    pub fn set_cwnd(&mut self, cwnd_mss: u32) {
        self.cwnd_mss = cwnd_mss.clamp(MIN_CWND, MAX_CWND);
    }

    pub fn inflight_bytes(&self) -> u64 {
        self.inflight_bytes
    }

    pub fn inflight_packets(&self) -> usize {
        self.inflight.len()
    }

    pub fn pending_rtx_bytes(&self) -> u64 {
        self.pending_rtx.iter().map(|p| p.bytes as u64).sum()
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn totals(&self) -> SenderTotals {
        self.totals
    }

    pub fn largest_acked(&self) -> Option<u64> {
        self.largest_acked
    }

    pub fn pto_count(&self) -> u64 {
        self.pto_count
    }

    /// Current PTO interval including exponential backoff.
    pub fn pto_interval_us(&self) -> u64 {
        let base = self.rtt.pto_us(self.cfg.granularity_us);
        (base * 2f64.powi(self.pto_count.min(30) as i32)).round() as u64
    }

    /// `(deadline, generation)` of the armed PTO timer.
    pub fn pto_timer(&self) -> Option<(u64, u64)> {
        self.pto_deadline_us.map(|d| (d, self.pto_generation))
    }

    fn arm_pto(&mut self, now_us: u64) {
        self.pto_generation += 1;
        self.pto_deadline_us = if self.inflight.is_empty() {
            None
        } else {
            Some(now_us + self.pto_interval_us())
        };
    }

    /// Sends while a full MSS still fits in the window. Pending retransmissions go first.
    pub fn fill_window(&mut self, now_us: u64) -> Vec<Packet> {
        let mut out = Vec::new();
        let mss = self.cfg.mss as u64;
        while self.inflight_bytes + mss <= self.cwnd_bytes() {
            let (bytes, is_rtx) = match self.pending_rtx.pop_front() {
                Some(p) => (p.bytes, true),
                None => (self.cfg.mss, false),
            };
            let pkt = Packet {
                seq: self.next_seq,
                bytes,
                sent_at_us: now_us,
                is_rtx,
            };
            self.next_seq += 1;
            self.inflight.insert(pkt.seq, pkt);
            self.inflight_bytes += bytes as u64;
            self.since_ack.sent_bytes += bytes as u64;
            self.totals.sent_bytes += bytes as u64;
            self.totals.sent_packets += 1;
            if is_rtx {
                self.since_ack.rtx_bytes += bytes as u64;
                self.since_ack.rtx_count += 1;
                self.totals.rtx_bytes += bytes as u64;
            }
            out.push(pkt);
        }
        if !out.is_empty() && self.pto_deadline_us.is_none() {
            self.arm_pto(now_us);
        }
        out
    }

    /// Processes an ACK. Returns `None` when it names no in-flight packet.
    pub fn on_ack(&mut self, ack: &AckInfo, now_us: u64) -> Option<ObservationRecord> {
        let mut acked_bytes = 0u64;
        let mut newest: Option<Packet> = None;
        for &seq in &ack.seqs {
            match self.inflight.remove(&seq) {
                Some(pkt) => {
                    acked_bytes += pkt.bytes as u64;
                    if newest.is_none_or(|n| pkt.seq > n.seq) {
                        newest = Some(pkt);
                    }
                }
                None => self.totals.unknown_acks += 1,
            }
        }
        let newest = newest?;
        self.inflight_bytes -= acked_bytes;
        self.totals.acked_bytes += acked_bytes;
        self.largest_acked = Some(self.largest_acked.map_or(newest.seq, |l| l.max(newest.seq)));

        let sample = (now_us - newest.sent_at_us) as f64;
        self.rtt.update(sample);
        self.rtt_min.update(sample, now_us);
        self.standing.push_back((now_us, sample));
        self.prune_standing(now_us);
        self.throughput.on_ack(now_us, acked_bytes);

        let rec = self.snapshot(now_us, acked_bytes, acked_bytes, 0, false);
        self.since_ack = SinceAck::default();
        self.pto_count = 0;
        self.arm_pto(now_us);
        Some(rec)
    }

    fn prune_standing(&mut self, now_us: u64) {
        // keep at least the newest sample and everything that could fall inside srtt/2
        let horizon = now_us as f64 - self.rtt.srtt_us;
        while self.standing.len() > 1 && (self.standing[0].0 as f64) <= horizon {
            self.standing.pop_front();
        }
    }

    /// Declares packets lost once `largest_acked >= seq + reorder_threshold`.
    pub fn detect_losses(&mut self, now_us: u64) -> Option<ObservationRecord> {
        let largest = self.largest_acked?;
        if largest < self.cfg.reorder_threshold {
            return None;
        }
        let cutoff = largest - self.cfg.reorder_threshold;
        let lost: Vec<u64> = self.inflight.range(..=cutoff).map(|(&s, _)| s).collect();
        if lost.is_empty() {
            return None;
        }
        let mut lost_bytes = 0u64;
        let mut first_sent = u64::MAX;
        let mut last_sent = 0u64;
        for seq in &lost {
            let pkt = self
                .inflight
                .remove(seq)
                .expect("lost packet was in flight");
            lost_bytes += pkt.bytes as u64;
            first_sent = first_sent.min(pkt.sent_at_us);
            last_sent = last_sent.max(pkt.sent_at_us);
            self.pending_rtx.push_back(PendingRtx { bytes: pkt.bytes });
        }
        self.inflight_bytes -= lost_bytes;
        self.totals.lost_bytes += lost_bytes;
        let span = (last_sent - first_sent) as f64;
        let persistent =
            lost.len() >= 2 && span > self.cfg.pc_mult * self.rtt.pto_us(self.cfg.granularity_us);
        if self.inflight.is_empty() {
            self.arm_pto(now_us);
        }
        Some(self.snapshot(now_us, 0, 0, lost_bytes, persistent))
    }

    /// Probe timeout: the oldest unacknowledged packet is declared lost and queued
    /// for retransmission, and the timer backs off.
    pub fn on_pto_expiry(&mut self, now_us: u64) -> Option<ObservationRecord> {
        let (&seq, _) = self.inflight.iter().next()?;
        let pkt = self.inflight.remove(&seq).expect("present");
        self.inflight_bytes -= pkt.bytes as u64;
        self.totals.lost_bytes += pkt.bytes as u64;
        self.totals.pto_expiries += 1;
        self.pending_rtx.push_front(PendingRtx { bytes: pkt.bytes });
        self.pto_count += 1;
        self.total_pto_count += 1;
        self.since_ack.timeout_rtx_count += 1;
        let rec = self.snapshot(now_us, 0, 0, pkt.bytes as u64, false);
        // re-arm with the backed-off interval even though the probe is not sent yet
        self.pto_generation += 1;
        self.pto_deadline_us = Some(now_us + self.pto_interval_us());
        Some(rec)
    }

    fn snapshot(
        &mut self,
        now_us: u64,
        acked_bytes: u64,
        received_bytes: u64,
        lost_bytes: u64,
        persistent: bool,
    ) -> ObservationRecord {
        let has_rtt = self.rtt.has_sample;
        let srtt = if has_rtt { self.rtt.srtt_us } else { 0.0 };
        let standing = if !self.standing.is_empty() {
            rtt_standing(&self.standing, self.rtt.srtt_us, now_us)
        } else {
            0.0
        };
        let rtt_min = self.rtt_min.current().unwrap_or(0.0);
        let mut delay = standing - rtt_min;
        if delay < 0.0 {
            self.totals.clamped_delays += 1;
            delay = 0.0;
        }
        let cwnd_bytes = self.cwnd_bytes();
        let throughput = match self.cfg.throughput_mode {
            ThroughputMode::Rolling => self.throughput.estimate(now_us),
            ThroughputMode::Instantaneous if standing > 0.0 => cwnd_bytes as f64 / standing,
            ThroughputMode::Instantaneous => 0.0,
        };
        ObservationRecord {
            lrtt: if has_rtt {
                self.rtt.latest_us / 1000.0
            } else {
                0.0
            },
            rtt_min: rtt_min / 1000.0,
            srtt: srtt / 1000.0,
            rtt_standing: standing / 1000.0,
            rtt_var: if has_rtt {
                self.rtt.rttvar_us / 1000.0
            } else {
                0.0
            },
            delay: delay / 1000.0,
            cwnd_bytes: cwnd_bytes as f64,
            inflight_bytes: self.inflight_bytes as f64,
            writable_bytes: cwnd_bytes.saturating_sub(self.inflight_bytes) as f64,
            sent_bytes: self.since_ack.sent_bytes as f64,
            received_bytes: received_bytes as f64,
            rtx_bytes: self.since_ack.rtx_bytes as f64,
            acked_bytes: acked_bytes as f64,
            lost_bytes: lost_bytes as f64,
            throughput,
            rtx_count: self.since_ack.rtx_count as f64,
            timeout_based_rtx_count: self.since_ack.timeout_rtx_count as f64,
            pto_count: self.pto_count as f64,
            total_pto_count: self.total_pto_count as f64,
            persistent_congestion: if persistent { 1.0 } else { 0.0 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sender(cwnd: u32) -> Sender {
        Sender::new(TransportConfig {
            initial_cwnd: cwnd,
            ..Default::default()
        })
    }

    #[test]
    fn fills_initial_window() {
        let mut s = sender(10);
        let pkts = s.fill_window(0);
        assert_eq!(pkts.len(), 10);
        assert_eq!(s.inflight_bytes(), 14600);
        assert!(s.fill_window(0).is_empty());
    }

    #[test]
    fn clip_floor_keeps_two_packets_in_flight() {
        let mut s = sender(2);
        assert_eq!(s.fill_window(0).len(), 2);
        s.set_cwnd(1);
        assert_eq!(s.cwnd_mss(), 2);
        s.on_ack(&AckInfo::single(1), 50_000).unwrap();
        assert_eq!(s.fill_window(50_000).len(), 1);
        assert_eq!(s.inflight_packets(), 2);
    }

    #[test]
    fn rtt_initialization_and_ewma() {
        let mut e = RttEstimator::new(333_000.0);
        e.update(100_000.0);
        assert_eq!((e.srtt_us, e.rttvar_us), (100_000.0, 50_000.0));
        e.update(100_000.0);
        assert_eq!((e.srtt_us, e.rttvar_us), (100_000.0, 37_500.0));
    }

    #[test]
    fn pto_formula_and_backoff() {
        let mut s = sender(10);
        s.rtt = RttEstimator {
            srtt_us: 100_000.0,
            rttvar_us: 25_000.0,
            latest_us: 100_000.0,
            has_sample: true,
        };
        assert_eq!(s.pto_interval_us(), 200_000);
        s.fill_window(0);
        s.on_pto_expiry(200_000).unwrap();
        assert_eq!(s.pto_interval_us(), 400_000);
        assert_eq!(s.pto_timer().unwrap().0, 600_000);
        s.on_pto_expiry(600_000).unwrap();
        assert_eq!(s.pto_interval_us(), 800_000);
    }

    #[test]
    fn ack_resets_pto_counters_after_reporting() {
        let mut s = sender(10);
        s.fill_window(0);
        let r = s.on_pto_expiry(1_000_000).unwrap();
        assert_eq!(r.pto_count, 1.0);
        assert_eq!(r.timeout_based_rtx_count, 1.0);
        assert_eq!(r.lost_bytes, 1460.0);
        let probes = s.fill_window(1_000_000);
        assert_eq!(probes.len(), 1);
        assert!(probes[0].is_rtx);
        let a = s.on_ack(&AckInfo::single(2), 1_100_000).unwrap();
        assert_eq!(a.pto_count, 1.0);
        assert_eq!(a.timeout_based_rtx_count, 1.0);
        assert_eq!(a.rtx_count, 1.0);
        assert_eq!(s.pto_count(), 0);
        let b = s.on_ack(&AckInfo::single(3), 1_100_001).unwrap();
        assert_eq!(b.pto_count, 0.0);
        assert_eq!(b.total_pto_count, 1.0);
        assert_eq!(b.rtx_count, 0.0);
    }

    #[test]
    fn multi_packet_ack_accounting() {
        let mut s = sender(10);
        s.fill_window(0);
        let r = s.on_ack(&AckInfo { seqs: vec![1, 2] }, 60_000).unwrap();
        assert_eq!(r.acked_bytes, 2920.0);
        assert_eq!(r.received_bytes, 2920.0);
        assert_eq!(s.inflight_bytes(), 14600 - 2920);
        assert_eq!(r.lrtt, 60.0);
        assert_eq!(r.sent_bytes, 14600.0);
        assert_eq!(r.cwnd_bytes - r.inflight_bytes, r.writable_bytes);
    }

    #[test]
    fn unknown_ack_is_counted_and_ignored() {
        let mut s = sender(10);
        s.fill_window(0);
        assert!(s.on_ack(&AckInfo::single(99), 10).is_none());
        assert_eq!(s.totals().unknown_acks, 1);
        assert_eq!(s.inflight_bytes(), 14600);
    }

    #[test]
    fn reordering_threshold() {
        let mut s = sender(5);
        s.fill_window(0);
        s.on_ack(&AckInfo::single(4), 50_000).unwrap();
        s.on_ack(&AckInfo::single(5), 50_001).unwrap();
        let r = s.detect_losses(50_001).unwrap();
        assert_eq!(r.lost_bytes, 2920.0);
        assert_eq!(s.inflight_packets(), 1);
        assert_eq!(s.pending_rtx_bytes(), 2920);
        // packet 3 remains until something >= 6 is acked
        assert!(s.detect_losses(50_002).is_none());
    }

    #[test]
    fn no_gap_means_no_loss() {
        let mut s = sender(5);
        s.fill_window(0);
        for seq in 1..=5 {
            s.on_ack(&AckInfo::single(seq), 50_000 + seq).unwrap();
            assert!(s.detect_losses(50_000 + seq).is_none());
        }
    }

    #[test]
    fn persistent_congestion_when_loss_span_exceeds_three_ptos() {
        let mut s = sender(2);
        s.rtt = RttEstimator {
            srtt_us: 60_000.0,
            rttvar_us: 10_000.0,
            latest_us: 60_000.0,
            has_sample: true,
        };
        let pto = s.rtt.pto_us(1000.0); // 100 ms
        s.fill_window(0); // seq 1, 2 at t=0
        s.set_cwnd(4);
        let span = (3.1 * pto) as u64;
        s.fill_window(span); // seq 3, 4 at t=span
        s.set_cwnd(2000);
        s.fill_window(span + 1); // 5..
        s.largest_acked = Some(7);
        s.inflight.remove(&7);
        let r = s.detect_losses(span + 2).unwrap();
        assert_eq!(r.persistent_congestion, 1.0);
    }

    #[test]
    fn loss_burst_within_span_is_not_persistent() {
        let mut s = sender(10);
        s.fill_window(0);
        s.on_ack(&AckInfo::single(8), 60_000).unwrap();
        let r = s.detect_losses(60_000).unwrap();
        assert_eq!(r.persistent_congestion, 0.0);
        assert_eq!(r.lost_bytes, 5.0 * 1460.0);
    }

    #[test]
    fn byte_conservation_through_loss_and_rtx() {
        let mut s = sender(10);
        s.fill_window(0);
        s.on_ack(&AckInfo::single(5), 60_000).unwrap();
        s.detect_losses(60_000);
        s.fill_window(60_000);
        let t = s.totals();
        assert_eq!(
            t.sent_bytes,
            t.acked_bytes + t.lost_bytes + s.inflight_bytes()
        );
    }
}
