use std::io::Write;

use crate::error::RunError;
use crate::netsim::NamedScenario;
use crate::transport::CongestionController;

use super::episode::{run_episode, EpisodeConfig, EpisodeStats, LogEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub scenario: String,
    /// `None` for the per-scenario mean.
    pub run: Option<usize>,
    pub throughput_mbps: f64,
    pub p95_delay_ms: f64,
    pub episodic_return: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalTable {
    pub runs: Vec<EvalRow>,
    pub means: Vec<EvalRow>,
}

/// Runs every scenario `runs` times. Run `r` uses environment stream `seed + r`;
/// `make` builds a fresh controller for each run.
pub fn evaluate(
    scenarios: &[NamedScenario],
    make: &mut dyn FnMut(&NamedScenario, usize) -> Result<Box<dyn CongestionController>, RunError>,
    cfg: &EpisodeConfig,
    runs: usize,
    seed: u64,
) -> Result<EvalTable, RunError> {
    let mut table = EvalTable::default();
    for sc in scenarios {
        let mut acc = [0.0; 3];
        for r in 0..runs {
            let mut controller = make(sc, r)?;
            let out = run_episode(
                &sc.config,
                &sc.name,
                controller.as_mut(),
                cfg,
                seed.wrapping_add(r as u64),
            )?;
            let row = EvalRow {
                scenario: sc.name.clone(),
                run: Some(r),
                throughput_mbps: out.stats.throughput_mbps,
                p95_delay_ms: out.stats.p95_delay_ms,
                episodic_return: out.trajectory.episodic_return,
            };
            acc[0] += row.throughput_mbps;
            acc[1] += row.p95_delay_ms;
            acc[2] += row.episodic_return;
            table.runs.push(row);
        }
        if runs > 0 {
            let n = runs as f64;
            table.means.push(EvalRow {
                scenario: sc.name.clone(),
                run: None,
                throughput_mbps: acc[0] / n,
                p95_delay_ms: acc[1] / n,
                episodic_return: acc[2] / n,
            });
        }
    }
    Ok(table)
}

/// `time_ms,cum_bytes,cwnd_mss,reward`
pub fn write_stats_csv(mut w: impl Write, stats: &EpisodeStats) -> std::io::Result<()> {
    writeln!(w, "time_ms,cum_bytes,cwnd_mss,reward")?;
    for r in &stats.rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.time_ms, r.cum_bytes, r.cwnd_mss, r.reward
        )?;
    }
    Ok(())
}

/// `scenario,run,throughput_mbps,p95_delay_ms,return`; mean rows have `run=mean`.
pub fn write_eval_csv(mut w: impl Write, table: &EvalTable) -> std::io::Result<()> {
    writeln!(w, "scenario,run,throughput_mbps,p95_delay_ms,return")?;
    for r in table.runs.iter().chain(&table.means) {
        let run = r.run.map_or_else(|| "mean".to_string(), |i| i.to_string());
        writeln!(
            w,
            "{},{},{},{},{}",
            r.scenario, run, r.throughput_mbps, r.p95_delay_ms, r.episodic_return
        )?;
    }
    Ok(())
}

/// `time_us,event,seq,bytes,cwnd_mss,inflight_bytes`
pub fn write_trace_csv(mut w: impl Write, log: &[LogEntry]) -> std::io::Result<()> {
    writeln!(w, "time_us,event,seq,bytes,cwnd_mss,inflight_bytes")?;
    for e in log {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.time_us,
            e.event.as_str(),
            e.seq,
            e.bytes,
            e.cwnd_mss,
            e.inflight_bytes
        )?;
    }
    Ok(())
}
