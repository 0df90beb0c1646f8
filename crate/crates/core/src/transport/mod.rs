//! Window-based reliable sender with QUIC-style loss recovery, and the
//! controller interface that adjusts its window.

mod controller;
mod sender;

pub use controller::{
    AimdReno, CongestionController, Decision, FixedCwnd, RandomAction, StepInput,
};
pub use sender::{
    AckInfo, Packet, RttEstimator, Sender, SenderTotals, TransportConfig, DEFAULT_MSS,
};
