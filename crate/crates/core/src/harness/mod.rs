//! Episode loop: the sender runs over the emulated path while a controller is
//! consulted every step interval. Its decision takes effect after a lookup
//! delay, during which the sender either keeps going under the previous window
//! or is held back entirely.

mod agent;
mod episode;
mod report;

pub use agent::LearnedAgent;
pub use episode::{
    run_episode, EpisodeConfig, EpisodeOutcome, EpisodeStats, EpisodeTrajectory, LogEntry,
    LogEvent, StatsRow, StepRecord,
};
pub use report::{evaluate, write_eval_csv, write_stats_csv, write_trace_csv, EvalRow, EvalTable};

use crate::error::ConfigError;

pub const DEFAULT_STEP_INTERVAL_MS: u64 = 100;
pub const DEFAULT_DELTA_MS: u64 = 30;

/// Whether the sender is held back while a decision is pending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Blocking {
    NonBlocking,
    Blocking,
}

/// Timing of the decision loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentMode {
    pub blocking: Blocking,
    pub delta_ms: u64,
    pub step_interval_ms: u64,
}

impl Default for AgentMode {
    fn default() -> Self {
        Self::non_blocking(DEFAULT_DELTA_MS)
    }
}

impl AgentMode {
    pub fn non_blocking(delta_ms: u64) -> Self {
        Self {
            blocking: Blocking::NonBlocking,
            delta_ms,
            step_interval_ms: DEFAULT_STEP_INTERVAL_MS,
        }
    }

    pub fn blocking(delta_ms: u64) -> Self {
        Self {
            blocking: Blocking::Blocking,
            delta_ms,
            step_interval_ms: DEFAULT_STEP_INTERVAL_MS,
        }
    }

    pub fn is_blocking(&self) -> bool {
        self.blocking == Blocking::Blocking
    }

    pub fn delta_us(&self) -> u64 {
        self.delta_ms * 1000
    }

    pub fn step_interval_us(&self) -> u64 {
        self.step_interval_ms * 1000
    }

    /// The delay must fit strictly inside one step interval.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.step_interval_ms == 0 {
            return Err(ConfigError::Invalid {
                key: "step_interval_ms".into(),
                reason: "must be positive".into(),
            });
        }
        if self.delta_ms >= self.step_interval_ms {
            return Err(ConfigError::Invalid {
                key: "delta_ms".into(),
                reason: format!(
                    "{} ms does not fit inside the {} ms step interval",
                    self.delta_ms, self.step_interval_ms
                ),
            });
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.blocking {
            Blocking::NonBlocking => format!("nonblocking-{}ms", self.delta_ms),
            Blocking::Blocking => format!("blocking-{}ms", self.delta_ms),
        }
    }
}

impl std::str::FromStr for Blocking {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "blocking" => Ok(Blocking::Blocking),
            "nonblocking" | "non-blocking" => Ok(Blocking::NonBlocking),
            _ => Err(ConfigError::Invalid {
                key: "mode".into(),
                reason: format!("expected blocking or nonblocking, got {s:?}"),
            }),
        }
    }
}
