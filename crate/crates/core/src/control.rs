//! Discrete cwnd action space and the per-step reward.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;

pub const MIN_CWND: u32 = 2;
pub const MAX_CWND: u32 = 2000;
pub const INITIAL_CWND: u32 = 10;

pub const DEFAULT_ACTIONS: &str = "0,/2,-10,+10,*2";

/// One relative update of the congestion window, in MSS units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionOp {
    Keep,
    Div(u32),
    Sub(u32),
    Add(u32),
    Mul(u32),
}

impl ActionOp {
    /// Unclipped update. Division rounds down.
    pub fn update(self, cwnd: u32) -> u64 {
        let c = cwnd as u64;
        match self {
            ActionOp::Keep => c,
            ActionOp::Div(n) => c / n as u64,
            ActionOp::Sub(n) => c.saturating_sub(n as u64),
            ActionOp::Add(n) => c + n as u64,
            ActionOp::Mul(n) => c * n as u64,
        }
    }
}

impl fmt::Display for ActionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionOp::Keep => write!(f, "0"),
            ActionOp::Div(n) => write!(f, "/{n}"),
            ActionOp::Sub(n) => write!(f, "-{n}"),
            ActionOp::Add(n) => write!(f, "+{n}"),
            ActionOp::Mul(n) => write!(f, "*{n}"),
        }
    }
}

/// `clip(update(cwnd, op), 2, 2000)`.
pub fn apply_action(cwnd: u32, op: ActionOp) -> u32 {
    op.update(cwnd).clamp(MIN_CWND as u64, MAX_CWND as u64) as u32
}

/// Ordered set of actions; policies index into `ops`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    ops: Vec<ActionOp>,
    source: String,
}

impl ActionSpace {
    /// Parses a comma-separated list: `0`, `/N`, `-N`, `+N`, `*N` with N ≥ 1.
    pub fn parse(cfg: &str) -> Result<Self, ConfigError> {
        let mut ops = Vec::new();
        for (position, raw) in cfg.split(',').enumerate() {
            let token = raw.trim();
            let err = |reason| ConfigError::ActionToken {
                token: token.to_string(),
                position,
                reason,
            };
            if token.is_empty() {
                return Err(err("empty token"));
            }
            if token == "0" {
                ops.push(ActionOp::Keep);
                continue;
            }
            let (sign, digits) = token.split_at(1);
            if !digits.bytes().all(|b| b.is_ascii_digit()) || digits.is_empty() {
                return Err(err(
                    "expected 0 or one of / - + * followed by a positive integer",
                ));
            }
            let n: u32 = digits.parse().map_err(|_| err("operand out of range"))?;
            if n == 0 {
                return Err(err("operand must be positive"));
            }
            ops.push(match sign {
                "/" => ActionOp::Div(n),
                "-" => ActionOp::Sub(n),
                "+" => ActionOp::Add(n),
                "*" => ActionOp::Mul(n),
                _ => return Err(err("unknown operator")),
            });
        }
        Ok(Self {
            ops,
            source: cfg.to_string(),
        })
    }

    pub fn ops(&self) -> &[ActionOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<ActionOp> {
        self.ops.get(index).copied()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Index of `Keep`, if the space has one.
    pub fn keep_index(&self) -> Option<usize> {
        self.ops.iter().position(|op| *op == ActionOp::Keep)
    }
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self::parse(DEFAULT_ACTIONS).expect("default action space parses")
    }
}

impl FromStr for ActionSpace {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for ActionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardKind {
    /// `t - beta * d`
    #[default]
    Linear,
    /// `log t - beta * log d`; only used for evaluation.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub beta: f64,
    pub kind: RewardKind,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            beta: 0.2,
            kind: RewardKind::Linear,
        }
    }
}

// floor for the log variant so an idle window stays finite
const LOG_FLOOR: f64 = 1e-6;

/// Reward of one window from per-ACK throughput estimates (MB/s) and queuing
/// delays (ms): mean throughput minus `beta` times the maximum delay. An empty
/// window scores zero.
pub fn compute_reward(throughputs: &[f64], delays: &[f64], params: &RewardParams) -> f64 {
    if throughputs.is_empty() && delays.is_empty() {
        return 0.0;
    }
    let t = if throughputs.is_empty() {
        0.0
    } else {
        throughputs.iter().sum::<f64>() / throughputs.len() as f64
    };
    let d = delays.iter().copied().fold(0.0, f64::max);
    match params.kind {
        RewardKind::Linear => t - params.beta * d,
        RewardKind::Log => t.max(LOG_FLOOR).ln() - params.beta * d.max(LOG_FLOOR).ln(),
    }
}
