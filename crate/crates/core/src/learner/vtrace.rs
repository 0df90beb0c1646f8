use crate::error::RunError;
use crate::scalar::Scalar;

/// Off-policy corrected value targets and policy-gradient advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct VTrace<T> {
    pub vs: Vec<T>,
    pub pg_advantages: Vec<T>,
    /// Clipped ratios `min(rho_bar, pi/mu)`.
    pub rhos: Vec<T>,
    /// Unclipped ratios `pi/mu`.
    pub ratios: Vec<T>,
}

/// Backward recursion
/// `vs_t = V_t + δ_t + γ c_t (vs_{t+1} − V_{t+1})`, `δ_t = ρ_t (r_t + γ V_{t+1} − V_t)`,
/// with `V_T = vs_T = bootstrap`.
#[allow(clippy::too_many_arguments)]
pub fn vtrace_targets<T: Scalar>(
    rewards: &[T],
    values: &[T],
    bootstrap_value: T,
    behavior_log_probs: &[T],
    target_log_probs: &[T],
    gamma: T,
    rho_bar: T,
    c_bar: T,
) -> Result<VTrace<T>, RunError> {
    let n = rewards.len();
    if values.len() != n || behavior_log_probs.len() != n || target_log_probs.len() != n {
        return Err(RunError::Shape(format!(
            "v-trace inputs disagree: {} rewards, {} values, {} behavior and {} target log-probs",
            n,
            values.len(),
            behavior_log_probs.len(),
            target_log_probs.len()
        )));
    }
    let ratios: Vec<T> = target_log_probs
        .iter()
        .zip(behavior_log_probs)
        .map(|(&t, &b)| (t - b).exp())
        .collect();
    let rhos: Vec<T> = ratios.iter().map(|&r| r.min(rho_bar)).collect();
    let mut vs = vec![T::zero(); n];
    let mut next_v = bootstrap_value;
    let mut next_vs = bootstrap_value;
    for t in (0..n).rev() {
        let c = ratios[t].min(c_bar);
        let delta = rhos[t] * (rewards[t] + gamma * next_v - values[t]);
        vs[t] = values[t] + delta + gamma * c * (next_vs - next_v);
        next_v = values[t];
        next_vs = vs[t];
    }
    let pg_advantages = (0..n)
        .map(|t| {
            let next = if t + 1 < n {
                vs[t + 1]
            } else {
                bootstrap_value
            };
            rhos[t] * (rewards[t] + gamma * next - values[t])
        })
        .collect();
    Ok(VTrace {
        vs,
        pg_advantages,
        rhos,
        ratios,
    })
}
