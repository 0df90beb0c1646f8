/// Number of per-ACK statistics.
pub const NUM_FEATURES: usize = 20;

/// Column names in table order. This order is a compatibility contract for
/// saved trajectories and state vectors.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "lrtt",
    "rtt_min",
    "srtt",
    "rtt_standing",
    "rtt_var",
    "delay",
    "cwnd_bytes",
    "inflight_bytes",
    "writable_bytes",
    "sent_bytes",
    "received_bytes",
    "rtx_bytes",
    "acked_bytes",
    "lost_bytes",
    "throughput",
    "rtx_count",
    "timeout_based_rtx_count",
    "pto_count",
    "total_pto_count",
    "persistent_congestion",
];

/// Features 1-6 (0-based 0..6) are times in ms.
pub const TIME_FEATURES: std::ops::Range<usize> = 0..6;
/// Features 7-14 (0-based 6..14) are byte counts.
pub const BYTE_FEATURES: std::ops::Range<usize> = 6..14;
/// Features 1-9 have no meaningful sum; their sum slot is always zero.
pub const NO_SUM_FEATURES: std::ops::Range<usize> = 0..9;

pub const TIME_SCALE: f64 = 1e-3;
pub const BYTE_SCALE: f64 = 1e-4;

/// Network statistics gathered when an ACK or a loss notification arrives.
///
/// Times are in milliseconds, byte counts in bytes, throughput in MB/s.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObservationRecord {
    pub lrtt: f64,
    pub rtt_min: f64,
    pub srtt: f64,
    pub rtt_standing: f64,
    pub rtt_var: f64,
    pub delay: f64,
    pub cwnd_bytes: f64,
    pub inflight_bytes: f64,
    pub writable_bytes: f64,
    pub sent_bytes: f64,
    pub received_bytes: f64,
    pub rtx_bytes: f64,
    pub acked_bytes: f64,
    pub lost_bytes: f64,
    pub throughput: f64,
    pub rtx_count: f64,
    pub timeout_based_rtx_count: f64,
    pub pto_count: f64,
    pub total_pto_count: f64,
    pub persistent_congestion: f64,
}

impl ObservationRecord {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.lrtt,
            self.rtt_min,
            self.srtt,
            self.rtt_standing,
            self.rtt_var,
            self.delay,
            self.cwnd_bytes,
            self.inflight_bytes,
            self.writable_bytes,
            self.sent_bytes,
            self.received_bytes,
            self.rtx_bytes,
            self.acked_bytes,
            self.lost_bytes,
            self.throughput,
            self.rtx_count,
            self.timeout_based_rtx_count,
            self.pto_count,
            self.total_pto_count,
            self.persistent_congestion,
        ]
    }

    pub fn from_array(a: [f64; NUM_FEATURES]) -> Self {
        Self {
            lrtt: a[0],
            rtt_min: a[1],
            srtt: a[2],
            rtt_standing: a[3],
            rtt_var: a[4],
            delay: a[5],
            cwnd_bytes: a[6],
            inflight_bytes: a[7],
            writable_bytes: a[8],
            sent_bytes: a[9],
            received_bytes: a[10],
            rtx_bytes: a[11],
            acked_bytes: a[12],
            lost_bytes: a[13],
            throughput: a[14],
            rtx_count: a[15],
            timeout_based_rtx_count: a[16],
            pto_count: a[17],
            total_pto_count: a[18],
            persistent_congestion: a[19],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// A record after scaling, in table order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedRecord(pub [f64; NUM_FEATURES]);

/// Scales times by 1e-3 and byte counts by 1e-4; the rest pass through.
pub fn normalize(rec: &ObservationRecord) -> NormalizedRecord {
    let mut a = rec.to_array();
    for v in &mut a[TIME_FEATURES] {
        *v *= TIME_SCALE;
    }
    for v in &mut a[BYTE_FEATURES] {
        *v *= BYTE_SCALE;
    }
    NormalizedRecord(a)
}
