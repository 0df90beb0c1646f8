use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::RunError;
use crate::harness::EpisodeTrajectory;
use crate::neuralnet::{backward, log_softmax, unroll, HiddenState, ModelParams, RmsProp};

use super::vtrace::vtrace_targets;

/// Published parameters. Versions increase by one per learner update.
#[derive(Debug, Clone)]
pub struct ParamSnapshot {
    pub version: u64,
    pub params: Arc<ModelParams<f64>>,
}

/// A trajectory plus where it came from.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: EpisodeTrajectory,
    pub actor_id: usize,
    pub episode: u64,
    /// Snapshot version the actor acted with.
    pub policy_version: u64,
}

/// Coefficients of the actor-critic loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Multiplies rewards before they enter the value targets.
    pub reward_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            rho_bar: 1.0,
            c_bar: 1.0,
            entropy_coef: 0.01,
            value_coef: 0.5,
            reward_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepMetrics {
    /// Version of the snapshot produced by this update.
    pub version: u64,
    pub batch_size: usize,
    pub transitions: usize,
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean policy entropy per transition.
    pub entropy: f64,
    /// Mean unclipped importance ratio.
    pub mean_ratio: f64,
    /// Largest `current_version − policy_version` in the batch.
    pub max_staleness: u64,
}

/// One actor-critic update over `batch`.
///
/// Step `t` of a trajectory contributes the transition
/// `(state_t, action_t, reward_{t+1})`; the value of the last state bootstraps
/// the tail, since episodes are cut off rather than terminated.
pub fn learner_step(
    batch: &[Rollout],
    snapshot: &ParamSnapshot,
    opt: &mut RmsProp<f64>,
    loss: &LossConfig,
) -> Result<(ParamSnapshot, StepMetrics), RunError> {
    let params = &*snapshot.params;
    let actions = params.shape.actions;
    let mut grads = ModelParams::<f64>::zeros(params.shape);
    let mut m = StepMetrics {
        batch_size: batch.len(),
        ..Default::default()
    };
    let mut ratio_sum = 0.0;
    let mut entropy_sum = 0.0;

    for ro in batch {
        let traj = &ro.trajectory;
        m.mean_return += traj.episodic_return;
        m.max_staleness = m
            .max_staleness
            .max(snapshot.version.saturating_sub(ro.policy_version));
        let n = traj.len();
        if n < 2 {
            continue;
        }
        let state_len = traj.steps[0].state.len();
        let mut states = Array2::<f64>::zeros((n, state_len));
        for (mut row, s) in states.rows_mut().into_iter().zip(&traj.steps) {
            if s.state.len() != state_len {
                return Err(RunError::Shape("trajectory states differ in length".into()));
            }
            row.assign(&Array1::from(s.state.values.clone()));
        }
        let prev_rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let initial = traj
            .initial_hidden
            .clone()
            .unwrap_or_else(|| HiddenState::for_shape(&params.shape));
        let tape = unroll(params, states.view(), &prev_rewards, &initial)?;

        let t_len = n - 1;
        let mut taken = Vec::with_capacity(t_len);
        let mut behavior = Vec::with_capacity(t_len);
        let mut target = Vec::with_capacity(t_len);
        let mut rewards = Vec::with_capacity(t_len);
        let mut log_pis = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let step = &traj.steps[t];
            let a = step.action_index.ok_or_else(|| {
                RunError::Shape(format!("step {t} of {} has no action", traj.scenario_id))
            })?;
            if a >= actions || step.behavior_logits.len() != actions {
                return Err(RunError::Shape(format!(
                    "step {t}: action {a} / {} behavior logits for {actions} actions",
                    step.behavior_logits.len()
                )));
            }
            let mu = log_softmax(Array1::from(step.behavior_logits.clone()).view());
            let lp = log_softmax(tape.logits.row(t));
            taken.push(a);
            behavior.push(mu[a]);
            target.push(lp[a]);
            rewards.push(traj.steps[t + 1].reward * loss.reward_scale);
            log_pis.push(lp);
        }
        let values: Vec<f64> = tape.values.iter().take(t_len).copied().collect();
        let bootstrap = tape.values[t_len];
        let vt = vtrace_targets(
            &rewards,
            &values,
            bootstrap,
            &behavior,
            &target,
            loss.gamma,
            loss.rho_bar,
            loss.c_bar,
        )?;

        let mut dlogits = Array2::<f64>::zeros((n, actions));
        let mut dvalues = Array1::<f64>::zeros(n);
        for t in 0..t_len {
            let lp = &log_pis[t];
            let adv = vt.pg_advantages[t];
            let ent: f64 = -lp.iter().map(|&l| l.exp() * l).sum::<f64>();
            m.policy_loss += -lp[taken[t]] * adv;
            let err = vt.vs[t] - values[t];
            m.value_loss += loss.value_coef * err * err;
            entropy_sum += ent;
            ratio_sum += vt.ratios[t];
            for j in 0..actions {
                let p = lp[j].exp();
                let onehot = if j == taken[t] { 1.0 } else { 0.0 };
                dlogits[[t, j]] = -adv * (onehot - p) + loss.entropy_coef * p * (lp[j] + ent);
            }
            dvalues[t] = -2.0 * loss.value_coef * err;
        }
        m.transitions += t_len;
        backward(params, &tape, dlogits.view(), dvalues.view(), &mut grads)?;
    }

    if !(m.policy_loss.is_finite() && m.value_loss.is_finite() && entropy_sum.is_finite()) {
        return Err(RunError::NonFinite(format!(
            "loss at version {}: policy {}, value {}, entropy {}",
            snapshot.version, m.policy_loss, m.value_loss, entropy_sum
        )));
    }
    let mut next = params.clone();
    opt.step(&mut next, &grads)?;
    next.check_finite("parameters after update:")?;

    let nb = batch.len().max(1) as f64;
    let nt = m.transitions.max(1) as f64;
    m.mean_return /= nb;
    m.entropy = entropy_sum / nt;
    m.mean_ratio = if m.transitions == 0 {
        1.0
    } else {
        ratio_sum / nt
    };
    m.version = snapshot.version + 1;
    Ok((
        ParamSnapshot {
            version: m.version,
            params: Arc::new(next),
        },
        m,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::StateVector;
    use crate::harness::StepRecord;
    use crate::neuralnet::{forward, sample_action, softmax, ModelShape, RmsPropConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(recurrent: bool) -> ModelShape {
        ModelShape {
            state_len: 4,
            trunk: 8,
            hidden: 6,
            actions: 5,
            recurrent,
        }
    }

    /// Bandit: the state is constant and the reward following action `a` is `pay(a)`.
    fn rollout(
        params: &ModelParams<f64>,
        n: usize,
        seed: u64,
        pay: &dyn Fn(usize) -> f64,
    ) -> Rollout {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = StateVector {
            values: vec![0.5, -0.25, 1.0, 0.0],
        };
        let initial = HiddenState::for_shape(&params.shape);
        let mut hidden = initial.clone();
        let mut reward = 0.0;
        let mut steps = Vec::new();
        for _ in 0..n {
            let out = forward(params, &state.values, reward, &hidden).unwrap();
            let (a, _) = sample_action(out.logits.view(), &mut rng, false);
            steps.push(StepRecord {
                state: state.clone(),
                action_index: Some(a),
                behavior_logits: out.logits.to_vec(),
                reward,
                cwnd_after: 10,
                window_start_us: 0,
                action_applied_us: 0,
            });
            hidden = out.hidden;
            reward = pay(a);
        }
        let ret = steps.iter().map(|s| s.reward).sum();
        Rollout {
            trajectory: EpisodeTrajectory {
                steps,
                initial_hidden: Some(initial),
                scenario_id: "bandit".into(),
                total_bytes_delivered: 0,
                episodic_return: ret,
            },
            actor_id: 0,
            episode: 0,
            policy_version: 0,
        }
    }

    fn probs(params: &ModelParams<f64>) -> Vec<f64> {
        let h = HiddenState::for_shape(&params.shape);
        let out = forward(params, &[0.5, -0.25, 1.0, 0.0], 0.0, &h).unwrap();
        softmax(out.logits.view()).to_vec()
    }

    #[test]
    fn on_policy_batch_has_unit_ratio() {
        let params = ModelParams::init(tiny(true), 3);
        let snap = ParamSnapshot {
            version: 0,
            params: Arc::new(params.clone()),
        };
        let batch: Vec<_> = (0..3)
            .map(|i| rollout(&params, 20, i, &|a| a as f64))
            .collect();
        let mut opt = RmsProp::new(RmsPropConfig::default(), &params);
        let (next, m) = learner_step(&batch, &snap, &mut opt, &LossConfig::default()).unwrap();
        assert!((m.mean_ratio - 1.0).abs() < 1e-9, "{}", m.mean_ratio);
        assert_eq!(m.transitions, 3 * 19);
        assert_eq!(next.version, 1);
        assert_ne!(*next.params, params);
    }

    #[test]
    fn bandit_learns_the_paying_action() {
        let mut params = ModelParams::init(tiny(true), 5);
        let mut opt = RmsProp::new(
            RmsPropConfig {
                lr: 3e-3,
                ..Default::default()
            },
            &params,
        );
        let before = probs(&params)[4];
        let mut version = 0;
        for i in 0..60 {
            let ro = rollout(&params, 30, 100 + i, &|a| if a == 4 { 1.0 } else { 0.0 });
            let snap = ParamSnapshot {
                version,
                params: Arc::new(params.clone()),
            };
            let (next, _) = learner_step(&[ro], &snap, &mut opt, &LossConfig::default()).unwrap();
            params = (*next.params).clone();
            version = next.version;
        }
        let after = probs(&params)[4];
        assert!(after > before + 0.3, "{before} -> {after}");
    }

    #[test]
    fn dominant_entropy_bonus_flattens_the_policy() {
        let mut params = ModelParams::init(tiny(false), 6);
        params.policy_b[1] = 3.0;
        let mut opt = RmsProp::new(
            RmsPropConfig {
                lr: 3e-3,
                ..Default::default()
            },
            &params,
        );
        let loss = LossConfig {
            entropy_coef: 1e3,
            ..Default::default()
        };
        let h0 = -probs(&params).iter().map(|p| p * p.ln()).sum::<f64>();
        for i in 0..150 {
            let ro = rollout(&params, 10, i, &|a| if a == 1 { 1.0 } else { 0.0 });
            let snap = ParamSnapshot {
                version: i,
                params: Arc::new(params.clone()),
            };
            params = (*learner_step(&[ro], &snap, &mut opt, &loss)
                .unwrap()
                .0
                .params)
                .clone();
        }
        let p = probs(&params);
        let h1 = -p.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!(h1 > h0);
        assert!((h1 - 5f64.ln()).abs() < 0.05, "entropy {h1}, probs {p:?}");
    }

    #[test]
    fn stale_rollouts_report_staleness() {
        let params = ModelParams::init(tiny(true), 7);
        let mut ro = rollout(&params, 5, 1, &|_| 0.0);
        ro.policy_version = 2;
        let snap = ParamSnapshot {
            version: 5,
            params: Arc::new(params.clone()),
        };
        let mut opt = RmsProp::new(RmsPropConfig::default(), &params);
        let (_, m) = learner_step(&[ro], &snap, &mut opt, &LossConfig::default()).unwrap();
        assert_eq!(m.max_staleness, 3);
    }
}
