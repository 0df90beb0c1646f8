//! Deterministic congestion-control RL workbench.
//!
//! A virtual-time bottleneck emulator ([`netsim`]) carries traffic from a
//! window-based sender ([`transport`]). Per-ACK statistics are aggregated into
//! 100 ms state vectors with an action history ([`features`]); a policy picks
//! discrete window updates ([`control`]) that take effect after a lookup delay,
//! with or without blocking the sender ([`harness`]). Policies are trained by an
//! asynchronous actor-learner with importance-weighted off-policy correction
//! ([`learner`], [`neuralnet`]).

pub mod control;
pub mod error;
pub mod features;
pub mod harness;
pub mod learner;
pub mod netsim;
pub mod neuralnet;
pub mod scalar;
pub mod transport;

pub use error::{ConfigError, RunError};
pub use scalar::Scalar;

/// Double-precision network parameters, the default everywhere in the workbench.
pub type ModelParams64 = neuralnet::ModelParams<f64>;
pub type HiddenState64 = neuralnet::HiddenState<f64>;
pub type Checkpoint64 = neuralnet::Checkpoint<f64>;
pub type RmsProp64 = neuralnet::RmsProp<f64>;
/// Single-precision parameters.
pub type ModelParams32 = neuralnet::ModelParams<f32>;
