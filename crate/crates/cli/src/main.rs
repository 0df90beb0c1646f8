use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ccrl::control::{ActionSpace, RewardParams, DEFAULT_ACTIONS};
use ccrl::harness::{
    evaluate, run_episode, write_eval_csv, write_stats_csv, write_trace_csv, AgentMode, Blocking,
    EpisodeConfig, LearnedAgent, DEFAULT_DELTA_MS,
};
use ccrl::learner::{train, LossConfig, TrainConfig};
use ccrl::netsim::{bundled_scenarios, resolve_scenario, NamedScenario};
use ccrl::neuralnet::{Checkpoint, RmsPropConfig, DEFAULT_HIDDEN, DEFAULT_TRUNK};
use ccrl::transport::{AimdReno, CongestionController, FixedCwnd, RandomAction, DEFAULT_MSS};
use ccrl::{ConfigError, RunError};

mod manifest;
mod settings;

use manifest::Manifest;
use settings::ConfigFile;

#[derive(Parser, Debug)]
#[command(
    name = "ccrl",
    version,
    about = "Congestion-control RL workbench on a virtual-time network emulator"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Base seed for environments and policies.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated action space, e.g. "0,/2,-10,+10,*2".
    #[arg(long, global = true)]
    actions: Option<String>,
    /// Action history length in the state.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Delay weight of the reward.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Policy lookup delay in milliseconds.
    #[arg(long = "delta-ms", global = true)]
    delta_ms: Option<u64>,
    /// blocking or nonblocking.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Flat key=value config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy with the actor-learner.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline controller.
    Eval(EvalArgs),
    /// Cumulative bytes with and without blocking the sender during lookups.
    CompareBlocking(CompareArgs),
    /// Bundled network scenarios.
    Scenarios {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Re-run the command recorded in a manifest into a new output directory.
    Replay { manifest: PathBuf },
}

#[derive(Subcommand, Debug)]
enum ScenarioCommand {
    List,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Comma-separated scenario names or files (default: all bundled).
    #[arg(long)]
    scenarios: Option<String>,
    #[arg(long)]
    actors: Option<usize>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Replace the LSTM with a pass-through.
    #[arg(long)]
    no_lstm: bool,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho_bar: Option<f64>,
    #[arg(long)]
    c_bar: Option<f64>,
    #[arg(long)]
    entropy_coef: Option<f64>,
    #[arg(long)]
    value_coef: Option<f64>,
    #[arg(long)]
    reward_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint file, or one of aimd, random, fixed, fixed:<cwnd>.
    #[arg(long)]
    policy: String,
    #[arg(long)]
    scenarios: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    /// Override every scenario's duration.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Also write per-run step statistics.
    #[arg(long)]
    stats: bool,
    /// Also write per-run event traces.
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long, default_value = "wan-12mbps")]
    scenario: String,
    /// Checkpoint file, or one of aimd, random, fixed, fixed:<cwnd>.
    #[arg(long, default_value = "aimd")]
    policy: String,
    /// Comma-separated blocking delays in milliseconds.
    #[arg(long, default_value = "25,50")]
    deltas: String,
    #[arg(long)]
    duration_s: Option<f64>,
}

/// Settings shared by every command after merging the config file and flags.
struct Common {
    file: ConfigFile,
    seed: u64,
    actions: ActionSpace,
    k: usize,
    beta: f64,
    delta_ms: u64,
    blocking: Blocking,
}

impl Common {
    fn resolve(g: &Global) -> Result<Self, ConfigError> {
        let file = match &g.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let actions: String =
            file.pick("actions", g.actions.clone(), DEFAULT_ACTIONS.to_string())?;
        let mode: String = file.pick("mode", g.mode.clone(), "nonblocking".to_string())?;
        Ok(Self {
            seed: file.pick("seed", g.seed, 0)?,
            actions: ActionSpace::parse(&actions)?,
            k: file.pick("k", g.k, 20)?,
            beta: file.pick("beta", g.beta, 0.2)?,
            delta_ms: file.pick("delta_ms", g.delta_ms, DEFAULT_DELTA_MS)?,
            blocking: mode.parse()?,
            file,
        })
    }

    fn mode(&self) -> AgentMode {
        AgentMode {
            blocking: self.blocking,
            ..AgentMode::non_blocking(self.delta_ms)
        }
    }

    fn episode(&self, mode: AgentMode) -> Result<EpisodeConfig, ConfigError> {
        mode.validate()?;
        Ok(EpisodeConfig {
            mode,
            history_len: self.k,
            actions: self.actions.clone(),
            reward: RewardParams {
                beta: self.beta,
                ..Default::default()
            },
            ..Default::default()
        })
    }

    fn echo(&self, m: &mut Manifest) {
        m.set("seed", self.seed);
        m.set("actions", self.actions.source());
        m.set("k", self.k);
        m.set("beta", self.beta);
        m.set("delta_ms", self.delta_ms);
        m.set(
            "mode",
            match self.blocking {
                Blocking::Blocking => "blocking",
                Blocking::NonBlocking => "nonblocking",
            },
        );
    }
}

fn scenario_list(spec: Option<&str>) -> Result<Vec<NamedScenario>, ConfigError> {
    match spec {
        None => Ok(bundled_scenarios()),
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(resolve_scenario)
            .collect(),
    }
}

#[derive(Debug, Clone)]
enum PolicySource {
    Aimd,
    Random,
    /// `None` sizes the window to the scenario's BDP.
    Fixed(Option<u32>),
    Checkpoint(Arc<Checkpoint<f64>>),
}

impl PolicySource {
    fn parse(s: &str, common: &Common) -> Result<Self> {
        Ok(match s {
            "aimd" => PolicySource::Aimd,
            "random" | "rl-random" => PolicySource::Random,
            "fixed" => PolicySource::Fixed(None),
            _ if s.starts_with("fixed:") => {
                let n = s["fixed:".len()..]
                    .parse()
                    .map_err(|_| ConfigError::Invalid {
                        key: "policy".into(),
                        reason: format!("bad window in {s:?}"),
                    })?;
                PolicySource::Fixed(Some(n))
            }
            path => {
                let p = Path::new(path);
                if !p.exists() {
                    return Err(ConfigError::Io {
                        path: path.to_string(),
                        source: std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            "no such checkpoint",
                        ),
                    }
                    .into());
                }
                let ck = Checkpoint::<f64>::load(p)?;
                check_compatible(&ck, common)?;
                PolicySource::Checkpoint(Arc::new(ck))
            }
        })
    }

    fn build(
        &self,
        scenario: &NamedScenario,
        seed: u64,
        actions: usize,
    ) -> Box<dyn CongestionController> {
        match self {
            PolicySource::Aimd => Box::new(AimdReno::new(DEFAULT_MSS)),
            PolicySource::Random => Box::new(RandomAction::new(actions, seed)),
            PolicySource::Fixed(Some(n)) => Box::new(FixedCwnd::new(*n)),
            PolicySource::Fixed(None) => {
                let bdp = (scenario.config.bdp_bytes() / DEFAULT_MSS as f64).round() as u32;
                Box::new(FixedCwnd::new(bdp))
            }
            PolicySource::Checkpoint(ck) => {
                Box::new(LearnedAgent::new(Arc::new(ck.params.clone()), seed, true))
            }
        }
    }
}

fn check_compatible(ck: &Checkpoint<f64>, common: &Common) -> Result<(), ConfigError> {
    if ck.history_len != common.k {
        return Err(ConfigError::Invalid {
            key: "k".into(),
            reason: format!(
                "checkpoint was trained with k={} but k={} was requested",
                ck.history_len, common.k
            ),
        });
    }
    if ck.action_space != common.actions.source() {
        return Err(ConfigError::Invalid {
            key: "actions".into(),
            reason: format!(
                "checkpoint was trained with actions {:?} but {:?} was requested",
                ck.action_space,
                common.actions.source()
            ),
        });
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn cmd_train(common: &Common, a: &TrainArgs, out: &Path, m: &mut Manifest) -> Result<()> {
    let f = &common.file;
    let scenarios_spec: Option<String> = f.pick_opt("scenarios", a.scenarios.clone())?;
    let lstm = if a.no_lstm {
        false
    } else {
        f.pick("lstm", None, true)?
    };
    let cfg = TrainConfig {
        num_actors: f.pick("actors", a.actors, 4)?,
        total_steps: f.pick("total_steps", a.total_steps, 100_000)?,
        loss: LossConfig {
            gamma: f.pick("gamma", a.gamma, 0.99)?,
            rho_bar: f.pick("rho_bar", a.rho_bar, 1.0)?,
            c_bar: f.pick("c_bar", a.c_bar, 1.0)?,
            entropy_coef: f.pick("entropy_coef", a.entropy_coef, 0.01)?,
            value_coef: f.pick("value_coef", a.value_coef, 0.5)?,
            reward_scale: f.pick("reward_scale", a.reward_scale, 1.0)?,
        },
        optimizer: RmsPropConfig {
            lr: f.pick("lr", a.lr, 1e-5)?,
            ..Default::default()
        },
        episode: common.episode(common.mode())?,
        trunk: DEFAULT_TRUNK,
        hidden: f.pick("hidden", a.hidden, DEFAULT_HIDDEN)?,
        recurrent: lstm,
        scenarios: scenario_list(scenarios_spec.as_deref())?,
        seed: common.seed,
        checkpoint_every: f.pick("checkpoint_every", a.checkpoint_every, 0)?,
        out_dir: Some(out.to_path_buf()),
        ..Default::default()
    };
    cfg.validate()?;
    m.set(
        "scenarios",
        cfg.scenarios
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );
    m.set("actors", cfg.num_actors);
    m.set("total_steps", cfg.total_steps);
    m.set("lr", cfg.optimizer.lr);
    m.set("lstm", cfg.recurrent);
    m.set("hidden", cfg.hidden);
    m.set("checkpoint_every", cfg.checkpoint_every);
    m.set("gamma", cfg.loss.gamma);
    m.set("rho_bar", cfg.loss.rho_bar);
    m.set("c_bar", cfg.loss.c_bar);
    m.set("entropy_coef", cfg.loss.entropy_coef);
    m.set("value_coef", cfg.loss.value_coef);
    m.set("reward_scale", cfg.loss.reward_scale);

    let result = train(&cfg)?;
    m.virtual_time_us = result.env_steps * cfg.episode.mode.step_interval_us();
    m.output(out.join("curve.csv"));
    m.output(out.join("final.ckpt"));
    let every = cfg.checkpoint_every;
    if every > 0 {
        for v in (every..=result.checkpoint.snapshot_version).step_by(every as usize) {
            m.output(out.join(format!("checkpoint-{v:06}.ckpt")));
        }
    }
    println!(
        "trained {} steps in {} updates ({} actor failures); final checkpoint {}",
        result.env_steps,
        result.updates.len(),
        result.actor_failures,
        out.join("final.ckpt").display()
    );
    Ok(())
}

fn cmd_eval(common: &Common, a: &EvalArgs, out: &Path, m: &mut Manifest) -> Result<()> {
    let f = &common.file;
    let scenarios_spec: Option<String> = f.pick_opt("scenarios", a.scenarios.clone())?;
    let runs: usize = f.pick("runs", a.runs, 3)?;
    let duration: Option<f64> = f.pick_opt("duration_s", a.duration_s)?;
    let mut scenarios = scenario_list(scenarios_spec.as_deref())?;
    if let Some(d) = duration {
        for s in &mut scenarios {
            s.config = s.config.clone().with_duration(d);
        }
    }
    let policy = PolicySource::parse(&a.policy, common)?;
    let mut cfg = common.episode(common.mode())?;
    cfg.record_log = a.trace;
    m.set("policy", &a.policy);
    m.set(
        "scenarios",
        scenarios
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );
    m.set("runs", runs);
    if let Some(d) = duration {
        m.set("duration_s", d);
    }

    let actions = common.actions.len();
    let seed = common.seed;
    let index_of = |name: &str| scenarios.iter().position(|s| s.name == name).unwrap_or(0) as u64;
    let mut make =
        |sc: &NamedScenario, run: usize| -> Result<Box<dyn CongestionController>, RunError> {
            Ok(policy.build(sc, policy_seed(seed, index_of(&sc.name), run), actions))
        };
    let table = evaluate(&scenarios, &mut make, &cfg, runs, seed)?;
    let path = out.join("eval.csv");
    write_eval_csv(create(&path)?, &table)?;
    m.output(&path);

    if a.stats || a.trace {
        let dir = out.join("runs");
        fs::create_dir_all(&dir)?;
        for (i, sc) in scenarios.iter().enumerate() {
            for r in 0..runs {
                let mut c = policy.build(sc, policy_seed(seed, i as u64, r), actions);
                let o = run_episode(
                    &sc.config,
                    &sc.name,
                    c.as_mut(),
                    &cfg,
                    seed.wrapping_add(r as u64),
                )?;
                if a.stats {
                    let p = dir.join(format!("{}-{r}-stats.csv", sc.name));
                    write_stats_csv(create(&p)?, &o.stats)?;
                    m.output(&p);
                }
                if a.trace {
                    let p = dir.join(format!("{}-{r}-trace.csv", sc.name));
                    write_trace_csv(create(&p)?, &o.log)?;
                    m.output(&p);
                }
            }
        }
    }
    m.virtual_time_us = scenarios
        .iter()
        .map(|s| s.config.duration_us())
        .sum::<u64>()
        * runs as u64;

    println!(
        "{:<20} {:>6} {:>16} {:>13} {:>12}",
        "scenario", "run", "throughput_mbps", "p95_delay_ms", "return"
    );
    for r in table.runs.iter().chain(&table.means) {
        let run = r.run.map_or_else(|| "mean".to_string(), |i| i.to_string());
        println!(
            "{:<20} {:>6} {:>16.3} {:>13.2} {:>12.2}",
            r.scenario, run, r.throughput_mbps, r.p95_delay_ms, r.episodic_return
        );
    }
    Ok(())
}

fn policy_seed(seed: u64, scenario: u64, run: usize) -> u64 {
    seed.wrapping_mul(1_000_003)
        .wrapping_add(scenario * 1000 + run as u64)
}

fn cmd_compare(common: &Common, a: &CompareArgs, out: &Path, m: &mut Manifest) -> Result<()> {
    let mut sc = resolve_scenario(&a.scenario)?;
    let duration: f64 = common.file.pick("duration_s", a.duration_s, 60.0)?;
    sc.config = sc.config.clone().with_duration(duration);
    let deltas: Vec<u64> = a
        .deltas
        .split(',')
        .map(|d| {
            d.trim().parse().map_err(|_| ConfigError::Invalid {
                key: "deltas".into(),
                reason: format!("{d:?} is not a whole number of milliseconds"),
            })
        })
        .collect::<Result<_, _>>()?;
    let policy = PolicySource::parse(&a.policy, common)?;
    m.set("scenario", &sc.name);
    m.set("policy", &a.policy);
    m.set("deltas", &a.deltas);
    m.set("duration_s", duration);

    let mut modes = vec![AgentMode::non_blocking(common.delta_ms)];
    modes.extend(deltas.iter().map(|&d| AgentMode::blocking(d)));
    let mut curves = create(&out.join("compare.csv"))?;
    writeln!(curves, "mode,delta_ms,time_ms,cum_bytes,cwnd_mss,reward")?;
    let mut summary = create(&out.join("summary.csv"))?;
    writeln!(summary, "mode,delta_ms,total_bytes,gap_pct")?;
    let mut reference = None;
    for mode in modes {
        let cfg = common.episode(mode)?;
        let mut c = policy.build(&sc, policy_seed(common.seed, 0, 0), common.actions.len());
        let o = run_episode(&sc.config, &sc.name, c.as_mut(), &cfg, common.seed)?;
        let kind = if mode.is_blocking() {
            "blocking"
        } else {
            "nonblocking"
        };
        for r in &o.stats.rows {
            writeln!(
                curves,
                "{kind},{},{},{},{},{}",
                mode.delta_ms, r.time_ms, r.cum_bytes, r.cwnd_mss, r.reward
            )?;
        }
        let total = o.stats.rows.last().map_or(0, |r| r.cum_bytes);
        let base = *reference.get_or_insert(total);
        let gap = if base == 0 {
            0.0
        } else {
            (base as f64 - total as f64) / base as f64 * 100.0
        };
        writeln!(summary, "{kind},{},{total},{gap}", mode.delta_ms)?;
        println!(
            "{:<24} {:>14} bytes {:>8.2}% below non-blocking",
            mode.label(),
            total,
            gap
        );
    }
    curves.flush()?;
    summary.flush()?;
    m.output(out.join("compare.csv"));
    m.output(out.join("summary.csv"));
    m.virtual_time_us = sc.config.duration_us() * (1 + deltas.len() as u64);
    Ok(())
}

fn cmd_scenarios_list() {
    println!(
        "{:<18} {:>10} {:>8} {:>10} {:>6} {:>8}  policer",
        "name", "mbps", "owd_ms", "buffer", "loss", "dur_s"
    );
    for s in bundled_scenarios() {
        let c = &s.config;
        let policer = c.policer.map_or_else(
            || "-".to_string(),
            |p| format!("{} bps / {} B", p.rate_bps, p.burst_bytes),
        );
        println!(
            "{:<18} {:>10} {:>8} {:>10} {:>6} {:>8}  {}",
            s.name,
            c.bandwidth_bps / 1e6,
            c.one_way_delay_ms,
            c.buffer_bytes,
            c.loss_rate,
            c.duration_s,
            policer
        );
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let (name, needs_out) = match &cli.command {
        Command::Train(_) => ("train", true),
        Command::Eval(_) => ("eval", true),
        Command::CompareBlocking(_) => ("compare-blocking", true),
        Command::Scenarios { .. } => ("scenarios list", false),
        Command::Replay { .. } => ("replay", false),
    };
    if let Command::Replay { manifest } = &cli.command {
        let recorded = Manifest::load(manifest)?;
        let args = recorded.replay_args(&cli.global.out);
        info!("replaying {:?}", args);
        let replayed =
            Cli::try_parse_from(std::iter::once("ccrl".to_string()).chain(args.iter().cloned()))
                .map_err(|e| ConfigError::Invalid {
                    key: "manifest".into(),
                    reason: e.to_string(),
                })?;
        return run(replayed, args);
    }
    if !needs_out {
        cmd_scenarios_list();
        return Ok(());
    }
    let common = Common::resolve(&cli.global)?;
    let out = cli.global.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut m = Manifest::new(name, argv, now_ms());
    common.echo(&mut m);
    if let Some(p) = &cli.global.config {
        m.set("config_file", p.display());
    }
    match &cli.command {
        Command::Train(a) => cmd_train(&common, a, &out, &mut m)?,
        Command::Eval(a) => cmd_eval(&common, a, &out, &mut m)?,
        Command::CompareBlocking(a) => cmd_compare(&common, a, &out, &mut m)?,
        Command::Scenarios { .. } | Command::Replay { .. } => unreachable!(),
    }
    m.wall_end_unix_ms = now_ms();
    m.save(&out.join("manifest.json"))?;
    Ok(())
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ConfigError>() || matches!(c.downcast_ref::<RunError>(), Some(RunError::Config(_)))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
