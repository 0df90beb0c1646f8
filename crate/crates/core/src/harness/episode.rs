use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control::{apply_action, compute_reward, ActionSpace, RewardParams};
use crate::error::RunError;
use crate::features::{
    aggregate_records, normalize, ActionHistoryEntry, NormalizedRecord, StateVector,
};
use crate::netsim::{EnqueueOutcome, EventQueue, Link, LinkCounters, ScenarioConfig};
use crate::neuralnet::HiddenState;
use crate::transport::{
    AckInfo, CongestionController, Sender, SenderTotals, StepInput, TransportConfig,
};

use super::AgentMode;

/// Everything about an episode except the path and the controller.
#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub mode: AgentMode,
    /// Number of past actions appended to the state.
    pub history_len: usize,
    pub actions: ActionSpace,
    pub reward: RewardParams,
    pub transport: TransportConfig,
    /// Keep a per-event log (needed for traces and some checks; costs memory).
    pub record_log: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            mode: AgentMode::default(),
            history_len: 20,
            actions: ActionSpace::default(),
            reward: RewardParams::default(),
            transport: TransportConfig::default(),
            record_log: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: StateVector,
    /// `None` when the controller made no step-level decision.
    pub action_index: Option<usize>,
    pub behavior_logits: Vec<f64>,
    /// Reward of the window that produced `state`.
    pub reward: f64,
    pub cwnd_after: u32,
    pub window_start_us: u64,
    pub action_applied_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrajectory {
    pub steps: Vec<StepRecord>,
    pub initial_hidden: Option<HiddenState<f64>>,
    pub scenario_id: String,
    pub total_bytes_delivered: u64,
    pub episodic_return: f64,
}

impl EpisodeTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One row per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsRow {
    pub time_ms: u64,
    /// Bytes acknowledged so far.
    pub cum_bytes: u64,
    pub cwnd_mss: u32,
    pub reward: f64,
    /// Bytes that reached the receiver during this step's window.
    pub window_delivered_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub rows: Vec<StatsRow>,
    pub throughput_mbps: f64,
    /// 95th percentile one-way delay of delivered packets.
    pub p95_delay_ms: f64,
    pub delivered_bytes: u64,
    /// Bytes still on the wire when the episode ended.
    pub in_transit_bytes: u64,
    pub max_queue_bytes: u64,
    pub min_rtt_sample_us: Option<u64>,
    pub sender: SenderTotals,
    pub link: LinkCounters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogEvent {
    Send,
    Retransmit,
    Drop,
    Deliver,
    Ack,
    Loss,
    Pto,
    Tick,
    Apply,
    Cwnd,
}

impl LogEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            LogEvent::Send => "send",
            LogEvent::Retransmit => "rtx",
            LogEvent::Drop => "drop",
            LogEvent::Deliver => "deliver",
            LogEvent::Ack => "ack",
            LogEvent::Loss => "loss",
            LogEvent::Pto => "pto",
            LogEvent::Tick => "tick",
            LogEvent::Apply => "apply",
            LogEvent::Cwnd => "cwnd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub time_us: u64,
    pub event: LogEvent,
    pub seq: u64,
    pub bytes: u64,
    pub cwnd_mss: u32,
    pub inflight_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trajectory: EpisodeTrajectory,
    pub stats: EpisodeStats,
    pub log: Vec<LogEntry>,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrive {
        seq: u64,
        bytes: u64,
        sent_at_us: u64,
    },
    Ack {
        seq: u64,
        sent_at_us: u64,
    },
    Tick(usize),
    Apply {
        step: usize,
        action: usize,
    },
    Pto(u64),
    Unblock,
    End,
}

struct Loop<'a> {
    q: EventQueue<Ev>,
    link: Link,
    sender: Sender,
    controller: &'a mut dyn CongestionController,
    cfg: &'a EpisodeConfig,
    blocked_until_us: u64,
    pto_scheduled: Option<u64>,
    window: Vec<NormalizedRecord>,
    window_tput: Vec<f64>,
    window_delay: Vec<f64>,
    window_delivered: u64,
    history: VecDeque<ActionHistoryEntry>,
    delivered: u64,
    in_transit: u64,
    max_queue: u64,
    min_rtt: Option<u64>,
    owd_samples: Vec<u64>,
    log: Vec<LogEntry>,
}

impl Loop<'_> {
    fn note(&mut self, event: LogEvent, seq: u64, bytes: u64) {
        if self.cfg.record_log {
            self.log.push(LogEntry {
                time_us: self.q.now_us(),
                event,
                seq,
                bytes,
                cwnd_mss: self.sender.cwnd_mss(),
                inflight_bytes: self.sender.inflight_bytes(),
            });
        }
    }

    fn set_cwnd(&mut self, cwnd: u32) {
        let before = self.sender.cwnd_mss();
        self.sender.set_cwnd(cwnd);
        if self.sender.cwnd_mss() != before {
            self.note(LogEvent::Cwnd, 0, 0);
        }
    }

    fn try_send(&mut self) {
        let now = self.q.now_us();
        if now < self.blocked_until_us {
            return;
        }
        for pkt in self.sender.fill_window(now) {
            let bytes = pkt.bytes as u64;
            self.note(
                if pkt.is_rtx {
                    LogEvent::Retransmit
                } else {
                    LogEvent::Send
                },
                pkt.seq,
                bytes,
            );
            match self.link.enqueue(bytes, now) {
                EnqueueOutcome::Enqueued { arrive_at_us, .. } => {
                    self.in_transit += bytes;
                    self.max_queue = self.max_queue.max(self.link.state().queued_bytes);
                    self.q.schedule(
                        arrive_at_us,
                        Ev::Arrive {
                            seq: pkt.seq,
                            bytes,
                            sent_at_us: now,
                        },
                    );
                }
                EnqueueOutcome::Dropped(_) => self.note(LogEvent::Drop, pkt.seq, bytes),
            }
        }
    }

    fn sync_pto(&mut self) {
        if let Some((deadline, generation)) = self.sender.pto_timer() {
            if self.pto_scheduled != Some(generation) {
                self.pto_scheduled = Some(generation);
                self.q.schedule(deadline, Ev::Pto(generation));
            }
        }
    }

    fn on_loss_record(&mut self, rec: &crate::features::ObservationRecord) {
        let now = self.q.now_us();
        self.window.push(normalize(rec));
        if let Some(c) = self.controller.on_loss(rec, self.sender.cwnd_mss(), now) {
            self.set_cwnd(c);
        }
    }

    fn on_ack(&mut self, seq: u64, sent_at_us: u64) {
        let now = self.q.now_us();
        let Some(rec) = self.sender.on_ack(&AckInfo::single(seq), now) else {
            return;
        };
        let rtt = now - sent_at_us;
        self.min_rtt = Some(self.min_rtt.map_or(rtt, |m| m.min(rtt)));
        self.note(LogEvent::Ack, seq, rec.acked_bytes as u64);
        self.window.push(normalize(&rec));
        self.window_tput.push(rec.throughput);
        self.window_delay.push(rec.delay);
        if let Some(c) = self.controller.on_ack(&rec, self.sender.cwnd_mss(), now) {
            self.set_cwnd(c);
        }
        if let Some(loss) = self.sender.detect_losses(now) {
            self.note(LogEvent::Loss, 0, loss.lost_bytes as u64);
            self.on_loss_record(&loss);
        }
    }
}

/// Runs one episode of `scenario` under `controller`.
///
/// `seed` selects the environment's random stream (the scenario's own seed picks
/// the family); the controller owns whatever randomness it needs.
pub fn run_episode(
    scenario: &ScenarioConfig,
    scenario_id: &str,
    controller: &mut dyn CongestionController,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<EpisodeOutcome, RunError> {
    scenario.validate()?;
    cfg.mode.validate()?;
    let interval = cfg.mode.step_interval_us();
    let delta = cfg.mode.delta_us();
    let duration = scenario.duration_us();
    let num_steps = (duration / interval) as usize;
    let action_count = cfg.actions.len();

    let mut env_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    env_rng.set_stream(seed);
    let initial_hidden = controller.initial_hidden();
    let mut lp = Loop {
        q: EventQueue::new(),
        link: Link::new(scenario, env_rng),
        sender: Sender::new(cfg.transport.clone()),
        controller,
        cfg,
        blocked_until_us: 0,
        pto_scheduled: None,
        window: Vec::new(),
        window_tput: Vec::new(),
        window_delay: Vec::new(),
        window_delivered: 0,
        history: VecDeque::with_capacity(cfg.history_len + 1),
        delivered: 0,
        in_transit: 0,
        max_queue: 0,
        min_rtt: None,
        owd_samples: Vec::new(),
        log: Vec::new(),
    };
    let mut steps: Vec<StepRecord> = Vec::with_capacity(num_steps);
    let mut applied: Vec<bool> = Vec::with_capacity(num_steps);
    let mut rows: Vec<StatsRow> = Vec::with_capacity(num_steps);

    if num_steps == 0 {
        lp.q.schedule(duration, Ev::End);
    } else {
        lp.q.schedule(interval, Ev::Tick(0));
    }
    lp.try_send();
    lp.sync_pto();

    while let Some((now, ev)) = lp.q.pop() {
        match ev {
            Ev::End => break,
            Ev::Arrive {
                seq,
                bytes,
                sent_at_us,
            } => {
                lp.in_transit -= bytes;
                lp.delivered += bytes;
                lp.window_delivered += bytes;
                lp.owd_samples.push(now - sent_at_us);
                lp.note(LogEvent::Deliver, seq, bytes);
                // the return path is uncongested
                lp.q.schedule(
                    now + lp.link.one_way_delay_us(),
                    Ev::Ack { seq, sent_at_us },
                );
            }
            Ev::Ack { seq, sent_at_us } => lp.on_ack(seq, sent_at_us),
            Ev::Unblock => lp.blocked_until_us = 0,
            Ev::Pto(generation) => {
                if lp.sender.pto_timer() == Some((now, generation)) {
                    if let Some(rec) = lp.sender.on_pto_expiry(now) {
                        lp.note(LogEvent::Pto, 0, rec.lost_bytes as u64);
                        lp.on_loss_record(&rec);
                    }
                }
            }
            Ev::Tick(i) => {
                let records = std::mem::take(&mut lp.window);
                let history: Vec<ActionHistoryEntry> = lp.history.iter().copied().collect();
                let state = StateVector::build(
                    aggregate_records(&records),
                    &history,
                    cfg.history_len,
                    action_count,
                )?;
                let reward = compute_reward(&lp.window_tput, &lp.window_delay, &cfg.reward);
                lp.window_tput.clear();
                lp.window_delay.clear();
                lp.note(LogEvent::Tick, i as u64, 0);
                let cwnd = lp.sender.cwnd_mss();
                let decision = lp
                    .controller
                    .select_action(&StepInput {
                        step: i,
                        state: &state,
                        reward,
                        cwnd_mss: cwnd,
                    })
                    .map_err(|e| RunError::Policy(format!("step {i} of {scenario_id}: {e}")))?;
                let (action_index, logits) = match decision {
                    Some(d) => {
                        if d.action_index >= action_count {
                            return Err(RunError::Policy(format!(
                                "step {i}: action {} outside a space of {action_count}",
                                d.action_index
                            )));
                        }
                        if !d.logits.iter().all(|v| v.is_finite()) {
                            return Err(RunError::NonFinite(format!("policy logits at step {i}")));
                        }
                        lp.q.schedule(
                            now + delta,
                            Ev::Apply {
                                step: i,
                                action: d.action_index,
                            },
                        );
                        (Some(d.action_index), d.logits)
                    }
                    None => {
                        if cfg.mode.is_blocking() && delta > 0 {
                            lp.q.schedule(now + delta, Ev::Unblock);
                        }
                        (None, Vec::new())
                    }
                };
                // per-ACK controllers are held back too; only the lookup itself is modelled
                if cfg.mode.is_blocking() && delta > 0 {
                    lp.blocked_until_us = now + delta;
                }
                steps.push(StepRecord {
                    state,
                    action_index,
                    behavior_logits: logits,
                    reward,
                    cwnd_after: cwnd,
                    window_start_us: now - interval,
                    action_applied_us: now + delta,
                });
                applied.push(action_index.is_none());
                rows.push(StatsRow {
                    time_ms: now / 1000,
                    cum_bytes: lp.sender.totals().acked_bytes,
                    cwnd_mss: cwnd,
                    reward,
                    window_delivered_bytes: lp.window_delivered,
                });
                lp.window_delivered = 0;
                if i + 1 < num_steps {
                    lp.q.schedule(now + interval, Ev::Tick(i + 1));
                } else {
                    lp.q.schedule(duration.max(now), Ev::End);
                }
            }
            Ev::Apply { step, action } => {
                let op = cfg.actions.get(action).expect("validated at decision time");
                let next = apply_action(lp.sender.cwnd_mss(), op);
                lp.set_cwnd(next);
                lp.note(LogEvent::Apply, step as u64, 0);
                lp.history.push_front(ActionHistoryEntry {
                    action_index: action,
                    cwnd_after: next,
                });
                lp.history.truncate(cfg.history_len.max(1));
                steps[step].cwnd_after = next;
                applied[step] = true;
                lp.blocked_until_us = 0;
            }
        }
        lp.try_send();
        lp.sync_pto();
    }

    // decisions still in flight at the end: record the window they would produce
    for (step, done) in steps.iter_mut().zip(&applied) {
        if !done {
            let op = cfg
                .actions
                .get(step.action_index.expect("pending steps have actions"))
                .expect("valid");
            step.cwnd_after = apply_action(lp.sender.cwnd_mss(), op);
        }
    }

    let episodic_return = steps.iter().map(|s| s.reward).sum();
    let p95 =
        percentile_nearest_rank(&mut lp.owd_samples, 0.95).map_or(0.0, |us| us as f64 / 1000.0);
    let stats = EpisodeStats {
        rows,
        throughput_mbps: lp.delivered as f64 * 8.0 / scenario.duration_s / 1e6,
        p95_delay_ms: p95,
        delivered_bytes: lp.delivered,
        in_transit_bytes: lp.in_transit,
        max_queue_bytes: lp.max_queue,
        min_rtt_sample_us: lp.min_rtt,
        sender: lp.sender.totals(),
        link: lp.link.counters(),
    };
    Ok(EpisodeOutcome {
        trajectory: EpisodeTrajectory {
            steps,
            initial_hidden,
            scenario_id: scenario_id.to_string(),
            total_bytes_delivered: lp.delivered,
            episodic_return,
        },
        stats,
        log: lp.log,
    })
}

fn percentile_nearest_rank(samples: &mut [u64], p: f64) -> Option<u64> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_unstable();
    let rank = (p * samples.len() as f64).ceil() as usize;
    Some(samples[rank.clamp(1, samples.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::state_len;
    use crate::netsim::bundled_scenario;
    use crate::transport::{AimdReno, FixedCwnd, RandomAction};

    fn wan(duration_s: f64) -> ScenarioConfig {
        bundled_scenario("wan-12mbps")
            .unwrap()
            .config
            .with_duration(duration_s)
    }

    fn cfg(mode: AgentMode) -> EpisodeConfig {
        EpisodeConfig {
            mode,
            record_log: true,
            ..Default::default()
        }
    }

    #[test]
    fn thirty_seconds_make_three_hundred_steps() {
        let mut c = RandomAction::new(5, 1);
        let out = run_episode(&wan(30.0), "wan", &mut c, &cfg(AgentMode::default()), 0).unwrap();
        assert_eq!(out.trajectory.len(), 300);
        assert_eq!(out.stats.rows.len(), 300);
        let sum: f64 = out.trajectory.steps.iter().map(|s| s.reward).sum();
        assert_eq!(out.trajectory.episodic_return, sum);
        assert!(out
            .trajectory
            .steps
            .iter()
            .all(|s| s.state.len() == state_len(20, 5)));
    }

    #[test]
    fn action_applies_delta_after_the_window_closes() {
        let mut c = RandomAction::new(5, 2);
        let out = run_episode(
            &wan(2.0),
            "wan",
            &mut c,
            &cfg(AgentMode::non_blocking(30)),
            0,
        )
        .unwrap();
        for (i, s) in out.trajectory.steps.iter().enumerate() {
            assert_eq!(s.window_start_us, i as u64 * 100_000);
            assert_eq!(s.action_applied_us, s.window_start_us + 100_000 + 30_000);
        }
        let applies: Vec<u64> = out
            .log
            .iter()
            .filter(|e| e.event == LogEvent::Apply)
            .map(|e| e.time_us)
            .collect();
        assert_eq!(applies.len(), 19, "the last decision lands after the end");
        assert!(applies.iter().all(|t| t % 100_000 == 30_000));
    }

    #[test]
    fn zero_delta_blocking_matches_nonblocking() {
        let run = |mode| {
            let mut c = RandomAction::new(5, 3);
            run_episode(&wan(3.0), "wan", &mut c, &cfg(mode), 9).unwrap()
        };
        let a = run(AgentMode::non_blocking(0));
        let b = run(AgentMode::blocking(0));
        assert_eq!(a.log, b.log);
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn blocking_sends_nothing_while_waiting() {
        let mut c = RandomAction::new(5, 4);
        let out = run_episode(&wan(3.0), "wan", &mut c, &cfg(AgentMode::blocking(40)), 0).unwrap();
        let sends = out
            .log
            .iter()
            .filter(|e| matches!(e.event, LogEvent::Send | LogEvent::Retransmit));
        for e in sends {
            let phase = e.time_us % 100_000;
            assert!(
                e.time_us < 100_000 || phase >= 40_000,
                "send at {} inside a blocked interval",
                e.time_us
            );
        }
    }

    #[test]
    fn nonblocking_window_changes_only_at_apply() {
        let mut c = RandomAction::new(5, 5);
        let out = run_episode(
            &wan(3.0),
            "wan",
            &mut c,
            &cfg(AgentMode::non_blocking(30)),
            0,
        )
        .unwrap();
        for e in out.log.iter().filter(|e| e.event == LogEvent::Cwnd) {
            assert_eq!(e.time_us % 100_000, 30_000, "cwnd changed at {}", e.time_us);
        }
    }

    #[test]
    fn history_block_zero_is_previous_action() {
        let mut c = RandomAction::new(5, 6);
        let out = run_episode(&wan(3.0), "wan", &mut c, &cfg(AgentMode::default()), 0).unwrap();
        let steps = &out.trajectory.steps;
        assert!(steps[0].state.history_block(0, 5).iter().all(|&v| v == 0.0));
        for w in steps.windows(2) {
            let block = w[1].state.history_block(0, 5);
            let a = w[0].action_index.unwrap();
            for (j, &v) in block[..5].iter().enumerate() {
                assert_eq!(v, if j == a { 1.0 } else { 0.0 });
            }
            assert_eq!(block[5], w[0].cwnd_after as f64 * 1e-3);
        }
    }

    #[test]
    fn identical_inputs_identical_outcomes() {
        let run = || {
            let mut c = RandomAction::new(5, 7);
            let mut s = wan(2.0);
            s.loss_rate = 0.02;
            run_episode(&s, "wan", &mut c, &cfg(AgentMode::blocking(25)), 3).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fixed_window_at_bdp_fills_the_link() {
        let s = wan(10.0);
        let bdp_pkts = (s.bdp_bytes() / 1460.0).round() as u32;
        let mut c = FixedCwnd::new(bdp_pkts);
        let out = run_episode(&s, "wan", &mut c, &cfg(AgentMode::default()), 0).unwrap();
        assert!(
            (out.stats.throughput_mbps - 12.0).abs() < 0.6,
            "{}",
            out.stats.throughput_mbps
        );
        assert!(
            out.stats.p95_delay_ms < 30.0 + 5.0,
            "{}",
            out.stats.p95_delay_ms
        );
    }

    #[test]
    fn byte_conservation_with_aimd_and_loss() {
        let mut s = bundled_scenario("lossy-24mbps")
            .unwrap()
            .config
            .with_duration(5.0);
        s.loss_rate = 0.03;
        let mut c = AimdReno::new(1460);
        let out = run_episode(&s, "lossy", &mut c, &cfg(AgentMode::default()), 1).unwrap();
        let st = &out.stats;
        assert_eq!(st.sender.sent_bytes, st.link.offered_bytes);
        assert_eq!(
            st.link.offered_bytes,
            st.delivered_bytes + st.link.dropped_bytes + st.in_transit_bytes
        );
        assert!(st.sender.acked_bytes <= st.delivered_bytes);
        assert!(st.max_queue_bytes <= s.buffer_bytes);
        assert!(st.min_rtt_sample_us.unwrap() >= 2 * s.one_way_delay_us());
    }

    #[test]
    fn percentile_rank() {
        let mut v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile_nearest_rank(&mut v, 0.95), Some(95));
        assert_eq!(percentile_nearest_rank(&mut [], 0.95), None);
        assert_eq!(percentile_nearest_rank(&mut [7], 0.95), Some(7));
    }
}
