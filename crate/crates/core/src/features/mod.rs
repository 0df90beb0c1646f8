//! Environment state construction: per-ACK records, normalization, 100 ms
//! window aggregation and the action-history augmentation.
//!
//! Layout of a state vector of history length `k` over `|A|` actions:
//!
//! ```text
//! [feature 0: sum mean std min max] ... [feature 19: sum mean std min max]   100 entries
//! [one-hot a_{t-1} (|A|), cwnd_{t-1} * 1e-3] ... [a_{t-k}, cwnd_{t-k}]       k * (|A| + 1)
//! ```

mod aggregate;
mod estimators;
mod record;
mod state;

pub use aggregate::{aggregate_records, aggregate_window, column_stats, AGGREGATES, AGGREGATE_LEN};
pub use estimators::{
    rtt_standing, RttMinPolicy, RttMinTracker, ThroughputEstimator, MIN_THROUGHPUT_WINDOW_US,
    THROUGHPUT_WINDOW_ACKS,
};
pub use record::{
    normalize, NormalizedRecord, ObservationRecord, BYTE_FEATURES, BYTE_SCALE, FEATURE_NAMES,
    NO_SUM_FEATURES, NUM_FEATURES, TIME_FEATURES, TIME_SCALE,
};
pub use state::{encode_history, state_len, ActionHistoryEntry, StateVector, HISTORY_CWND_SCALE};

/// Source of the throughput feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThroughputMode {
    /// Rolling estimate over the last ten ACKs.
    #[default]
    Rolling,
    /// `cwnd_bytes / rtt_standing`.
    Instantaneous,
}
