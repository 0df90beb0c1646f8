//! Randomized invariants across the emulator, transport, features and network.

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ccrl::features::{aggregate_window, state_len, NUM_FEATURES};
use ccrl::harness::{run_episode, AgentMode, EpisodeConfig, LogEvent};
use ccrl::netsim::{EnqueueOutcome, EventQueue, Link, PolicerConfig, ScenarioConfig};
use ccrl::neuralnet::{forward, softmax, unroll, HiddenState, ModelParams, ModelShape};
use ccrl::transport::{AimdReno, CongestionController, RandomAction, DEFAULT_MSS};

fn scenario(bw_mbps: f64, owd_ms: f64, buffer: u64, loss: f64, policed: bool) -> ScenarioConfig {
    ScenarioConfig {
        bandwidth_bps: bw_mbps * 1e6,
        one_way_delay_ms: owd_ms,
        buffer_bytes: buffer.max(DEFAULT_MSS as u64),
        loss_rate: loss,
        policer: policed.then_some(PolicerConfig {
            rate_bps: bw_mbps * 0.5e6,
            burst_bytes: 20_000.0,
        }),
        duration_s: 3.0,
        seed: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn event_queue_pops_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 1..60)) {
        let mut q = EventQueue::new();
        for (i, &t) in times.iter().enumerate() {
            q.schedule(t, i);
        }
        let mut want: Vec<(u64, usize)> = times.iter().copied().zip(0..).collect();
        want.sort();
        let got: Vec<(u64, usize)> = std::iter::from_fn(|| q.pop()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn link_respects_buffer_and_rate(
        bw in 0.5f64..50.0,
        buffer in 1460u64..200_000,
        gaps in prop::collection::vec((0u64..2_000, 40u64..=1460), 1..400),
        window in (0u64..400_000, 1u64..200_000),
    ) {
        let cfg = scenario(bw, 20.0, buffer, 0.0, false);
        let mut link = Link::new(&cfg, ChaCha8Rng::seed_from_u64(1));
        let mut now = 0;
        let mut arrivals = Vec::new();
        for (gap, bytes) in gaps {
            now += gap;
            if let EnqueueOutcome::Enqueued { arrive_at_us, .. } = link.enqueue(bytes, now) {
                arrivals.push((arrive_at_us, bytes));
            }
            prop_assert!(link.state().queued_bytes <= buffer);
        }
        let c = link.counters();
        prop_assert_eq!(c.offered_bytes, c.enqueued_bytes + c.dropped_bytes);
        let (t1, len) = window;
        let t2 = t1 + len;
        let delivered: u64 = arrivals.iter().filter(|(t, _)| (t1..=t2).contains(t)).map(|(_, b)| b).sum();
        prop_assert!(delivered as f64 <= cfg.bandwidth_bps * len as f64 / 8e6 + DEFAULT_MSS as f64);
    }

    #[test]
    fn aggregates_are_ordered(rows in prop::collection::vec(prop::array::uniform20(-1e3f64..1e3), 1..50)) {
        let agg = aggregate_window(&rows);
        for f in 0..NUM_FEATURES {
            let [_, mean, std, min, max] = [agg[f * 5], agg[f * 5 + 1], agg[f * 5 + 2], agg[f * 5 + 3], agg[f * 5 + 4]];
            let slack = 1e-12 * max.abs().max(min.abs());
            prop_assert!(min <= mean + slack && mean <= max + slack);
            prop_assert!(std >= 0.0);
        }
    }

    #[test]
    fn state_length_formula(k in 0usize..64, actions in 1usize..16) {
        prop_assert_eq!(state_len(k, actions), 100 + k * (actions + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn episodes_keep_transport_invariants(
        bw in 1.0f64..30.0,
        owd in 2.0f64..80.0,
        buffer_bdp in 0.2f64..3.0,
        loss in 0.0f64..0.03,
        policed in any::<bool>(),
        blocking in any::<bool>(),
        aimd in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let bdp = bw * 1e6 / 8.0 * 2.0 * owd / 1000.0;
        let sc = scenario(bw, owd, (bdp * buffer_bdp) as u64, loss, policed);
        let mode = if blocking { AgentMode::blocking(40) } else { AgentMode::non_blocking(30) };
        let cfg = EpisodeConfig { mode, record_log: true, ..Default::default() };
        let mut c: Box<dyn CongestionController> =
            if aimd { Box::new(AimdReno::new(DEFAULT_MSS)) } else { Box::new(RandomAction::new(5, seed)) };
        let out = run_episode(&sc, "prop", c.as_mut(), &cfg, seed).unwrap();
        let st = &out.stats;

        for e in &out.log {
            if matches!(e.event, LogEvent::Send | LogEvent::Retransmit) {
                prop_assert!(e.inflight_bytes <= e.cwnd_mss as u64 * DEFAULT_MSS as u64, "{:?}", e);
            }
        }
        prop_assert_eq!(st.sender.sent_bytes, st.link.offered_bytes);
        prop_assert_eq!(st.link.offered_bytes, st.delivered_bytes + st.link.dropped_bytes + st.in_transit_bytes);
        prop_assert!(st.sender.acked_bytes <= st.delivered_bytes);
        prop_assert!(st.max_queue_bytes <= sc.buffer_bytes);
        if let Some(rtt) = st.min_rtt_sample_us {
            prop_assert!(rtt >= 2 * sc.one_way_delay_us());
        }
        for w in out.trajectory.steps.windows(2) {
            prop_assert!(w[0].window_start_us < w[1].window_start_us);
        }
    }

    #[test]
    fn unrolled_network_matches_stepwise(seed in 0u64..1000, steps in 1usize..12, recurrent in any::<bool>()) {
        let shape = ModelShape { state_len: 10, trunk: 12, hidden: 6, actions: 4, recurrent };
        let params = ModelParams::<f64>::init(shape, seed);
        let states = Array2::from_shape_fn((steps, 10), |(t, i)| ((t * 10 + i) as f64 * 0.37 + seed as f64).sin());
        let rewards: Vec<f64> = (0..steps).map(|t| (t as f64 - 3.0) * 0.2).collect();
        let h0 = HiddenState::for_shape(&shape);
        let tape = unroll(&params, states.view(), &rewards, &h0).unwrap();
        let mut h = h0;
        for t in 0..steps {
            let out = forward(&params, states.row(t).as_slice().unwrap(), rewards[t], &h).unwrap();
            for (a, b) in out.logits.iter().zip(tape.logits.row(t)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((out.value - tape.values[t]).abs() < 1e-12);
            let p = softmax(out.logits.view());
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            h = out.hidden;
        }
    }
}
