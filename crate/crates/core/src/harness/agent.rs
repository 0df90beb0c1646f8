use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::RunError;
use crate::neuralnet::{forward, sample_action, HiddenState, ModelParams};
use crate::transport::{CongestionController, Decision, StepInput};

/// Controller backed by the policy network. The LSTM state is threaded across
/// steps, starting from zeros.
#[derive(Debug, Clone)]
pub struct LearnedAgent {
    params: Arc<ModelParams<f64>>,
    initial: HiddenState<f64>,
    hidden: HiddenState<f64>,
    rng: ChaCha8Rng,
    greedy: bool,
}

impl LearnedAgent {
    pub fn new(params: Arc<ModelParams<f64>>, seed: u64, greedy: bool) -> Self {
        let initial = HiddenState::for_shape(&params.shape);
        Self {
            hidden: initial.clone(),
            initial,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            greedy,
        }
    }

    pub fn params(&self) -> &Arc<ModelParams<f64>> {
        &self.params
    }

    pub fn hidden(&self) -> &HiddenState<f64> {
        &self.hidden
    }
}

impl CongestionController for LearnedAgent {
    fn name(&self) -> &str {
        "learned"
    }

    fn select_action(&mut self, input: &StepInput<'_>) -> Result<Option<Decision>, RunError> {
        let out = forward(
            &self.params,
            &input.state.values,
            input.reward,
            &self.hidden,
        )?;
        if !out.logits.iter().all(|v| v.is_finite()) || !out.hidden.is_finite() {
            return Err(RunError::NonFinite(format!(
                "network output at step {}",
                input.step
            )));
        }
        let (action_index, _) = sample_action(out.logits.view(), &mut self.rng, self.greedy);
        self.hidden = out.hidden;
        Ok(Some(Decision {
            action_index,
            logits: out.logits.to_vec(),
        }))
    }

    fn initial_hidden(&self) -> Option<HiddenState<f64>> {
        Some(self.initial.clone())
    }
}
