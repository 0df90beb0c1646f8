use crate::control::{MAX_CWND, MIN_CWND};
use crate::error::RunError;

use super::aggregate::AGGREGATE_LEN;

/// Scale applied to the cwnd (in MSS) stored alongside each history action.
pub const HISTORY_CWND_SCALE: f64 = 1e-3;

/// An applied action and the window it produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionHistoryEntry {
    pub action_index: usize,
    pub cwnd_after: u32,
}

/// Length of the state for history length `k` and `action_count` actions.
pub fn state_len(k: usize, action_count: usize) -> usize {
    AGGREGATE_LEN + k * (action_count + 1)
}

/// Encodes the `k` most recent entries (newest first) as one-hot action plus
/// scaled cwnd. Missing entries are zero blocks.
pub fn encode_history(
    history: &[ActionHistoryEntry],
    k: usize,
    action_count: usize,
) -> Result<Vec<f64>, RunError> {
    let block = action_count + 1;
    let mut out = vec![0.0; k * block];
    for (i, entry) in history.iter().take(k).enumerate() {
        if entry.action_index >= action_count {
            return Err(RunError::Shape(format!(
                "history action index {} outside action space of size {}",
                entry.action_index, action_count
            )));
        }
        debug_assert!((MIN_CWND..=MAX_CWND).contains(&entry.cwnd_after));
        let base = i * block;
        out[base + entry.action_index] = 1.0;
        out[base + action_count] = entry.cwnd_after as f64 * HISTORY_CWND_SCALE;
    }
    Ok(out)
}

/// Aggregate window features followed by the encoded action history.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
}

impl StateVector {
    pub fn build(
        aggregate: Vec<f64>,
        history: &[ActionHistoryEntry],
        k: usize,
        action_count: usize,
    ) -> Result<Self, RunError> {
        if aggregate.len() != AGGREGATE_LEN {
            return Err(RunError::Shape(format!(
                "aggregate block has {} entries, expected {}",
                aggregate.len(),
                AGGREGATE_LEN
            )));
        }
        let mut values = aggregate;
        values.extend(encode_history(history, k, action_count)?);
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(RunError::NonFinite(format!("state entry {i}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// History block `i` (0 = newest): `action_count` one-hot entries then the scaled cwnd.
    pub fn history_block(&self, i: usize, action_count: usize) -> &[f64] {
        let block = action_count + 1;
        let start = AGGREGATE_LEN + i * block;
        &self.values[start..start + block]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_history() {
        let h = [ActionHistoryEntry {
            action_index: 3,
            cwnd_after: 20,
        }];
        let v = encode_history(&h, 2, 5).unwrap();
        let want = [0., 0., 0., 1., 0., 0.02, 0., 0., 0., 0., 0., 0.];
        assert_eq!(v.len(), want.len());
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_length_history_is_empty() {
        assert!(encode_history(&[], 0, 5).unwrap().is_empty());
    }

    #[test]
    fn default_dimensions() {
        assert_eq!(encode_history(&[], 20, 5).unwrap().len(), 120);
        assert_eq!(state_len(20, 5), 220);
        assert_eq!(state_len(16, 5), 196);
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let h = [ActionHistoryEntry {
            action_index: 5,
            cwnd_after: 10,
        }];
        assert!(encode_history(&h, 1, 5).is_err());
    }

    #[test]
    fn history_longer_than_k_is_truncated_to_newest() {
        let h: Vec<_> = (0..4)
            .map(|i| ActionHistoryEntry {
                action_index: i,
                cwnd_after: 10 * (i as u32 + 1),
            })
            .collect();
        let s = StateVector::build(vec![0.0; AGGREGATE_LEN], &h, 2, 5).unwrap();
        assert_eq!(s.len(), state_len(2, 5));
        assert_eq!(s.history_block(0, 5), &[1., 0., 0., 0., 0., 0.01]);
        assert_eq!(s.history_block(1, 5), &[0., 1., 0., 0., 0., 0.02]);
    }
}
