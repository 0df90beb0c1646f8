//! Actor-learner training with V-trace off-policy correction.

mod train;
mod update;
mod vtrace;

pub use train::{train, CurveRow, TrainConfig, TrainOutcome, CURVE_HEADER, MAX_BATCH};
pub use update::{learner_step, LossConfig, ParamSnapshot, Rollout, StepMetrics};
pub use vtrace::{vtrace_targets, VTrace};
