//! Policy/value network: two ReLU layers, a single-layer LSTM over trunk
//! features and the latest reward, a policy head and a baseline head.
//! Forward, backpropagation through time and RMSProp are implemented here.

mod backward;
mod checkpoint;
mod forward;
mod optim;
mod params;
mod policy;

pub use backward::backward;
pub use checkpoint::Checkpoint;
pub use forward::{forward, unroll, StepOutput, Tape};
pub use optim::{RmsProp, RmsPropConfig};
pub use params::{
    HiddenState, ModelParams, ModelShape, DEFAULT_HIDDEN, DEFAULT_TRUNK, TENSOR_NAMES,
};
pub use policy::{entropy, log_softmax, sample_action, softmax};
