use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use crossbeam_channel::{bounded, Receiver, Sender};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ConfigError, RunError};
use crate::features::state_len;
use crate::harness::{run_episode, EpisodeConfig, LearnedAgent};
use crate::netsim::NamedScenario;
use crate::neuralnet::{
    Checkpoint, ModelParams, ModelShape, RmsProp, RmsPropConfig, DEFAULT_HIDDEN, DEFAULT_TRUNK,
};

use super::update::{learner_step, LossConfig, ParamSnapshot, Rollout, StepMetrics};

pub const MAX_BATCH: usize = 8;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub num_actors: usize,
    /// Environment steps to consume before stopping.
    pub total_steps: u64,
    pub loss: LossConfig,
    pub optimizer: RmsPropConfig,
    /// Mode, history length, action space, reward and transport of every episode.
    pub episode: EpisodeConfig,
    pub trunk: usize,
    pub hidden: usize,
    pub recurrent: bool,
    pub scenarios: Vec<NamedScenario>,
    pub seed: u64,
    pub max_batch: usize,
    /// Write a checkpoint every this many updates (0 disables).
    pub checkpoint_every: u64,
    /// Where the curve and checkpoints go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_actors: 4,
            total_steps: 100_000,
            loss: LossConfig::default(),
            optimizer: RmsPropConfig::default(),
            episode: EpisodeConfig::default(),
            trunk: DEFAULT_TRUNK,
            hidden: DEFAULT_HIDDEN,
            recurrent: true,
            scenarios: Vec::new(),
            seed: 0,
            max_batch: MAX_BATCH,
            checkpoint_every: 0,
            out_dir: None,
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = &self.loss;
        if !(l.gamma > 0.0 && l.gamma <= 1.0) {
            return Err(invalid("gamma", "must lie in (0, 1]"));
        }
        if !(l.c_bar > 0.0 && l.rho_bar >= l.c_bar) {
            return Err(invalid("rho_bar", "need rho_bar >= c_bar > 0"));
        }
        if self.num_actors == 0 {
            return Err(invalid("num_actors", "need at least one actor"));
        }
        if self.scenarios.is_empty() {
            return Err(invalid("scenarios", "need at least one scenario"));
        }
        if self.max_batch == 0 {
            return Err(invalid("max_batch", "must be positive"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(invalid("lr", "must be positive"));
        }
        if self.episode.actions.is_empty() {
            return Err(invalid("actions", "empty action space"));
        }
        for s in &self.scenarios {
            s.config.validate()?;
        }
        self.episode.mode.validate()
    }

    pub fn model_shape(&self) -> ModelShape {
        let actions = self.episode.actions.len();
        ModelShape {
            state_len: state_len(self.episode.history_len, actions),
            trunk: self.trunk,
            hidden: self.hidden,
            actions,
            recurrent: self.recurrent,
        }
    }
}

/// One consumed trajectory and the update it fed.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    /// Environment steps consumed so far, including this trajectory.
    pub step: u64,
    pub episode: u64,
    pub actor_id: usize,
    pub scenario: String,
    pub episodic_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    /// Version the trajectory was generated with.
    pub snapshot_version: u64,
}

pub const CURVE_HEADER: &str =
    "step,episode,actor_id,scenario,return,policy_loss,value_loss,entropy,mean_ratio,snapshot_version";

impl CurveRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episode,
            self.actor_id,
            self.scenario,
            self.episodic_return,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.mean_ratio,
            self.snapshot_version
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint<f64>,
    pub curve: Vec<CurveRow>,
    pub updates: Vec<StepMetrics>,
    pub env_steps: u64,
    pub actor_failures: u64,
}

struct Learner<'a> {
    cfg: &'a TrainConfig,
    snapshot: ParamSnapshot,
    opt: RmsProp<f64>,
    curve: Vec<CurveRow>,
    updates: Vec<StepMetrics>,
    env_steps: u64,
    curve_file: Option<BufWriter<File>>,
}

impl<'a> Learner<'a> {
    fn new(cfg: &'a TrainConfig) -> Result<Self, RunError> {
        let params = ModelParams::<f64>::init(cfg.model_shape(), cfg.seed);
        let opt = RmsProp::new(cfg.optimizer, &params);
        let curve_file = match &cfg.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let mut f = BufWriter::new(File::create(dir.join("curve.csv"))?);
                writeln!(f, "{CURVE_HEADER}")?;
                Some(f)
            }
            None => None,
        };
        Ok(Self {
            cfg,
            snapshot: ParamSnapshot {
                version: 0,
                params: Arc::new(params),
            },
            opt,
            curve: Vec::new(),
            updates: Vec::new(),
            env_steps: 0,
            curve_file,
        })
    }

    fn done(&self) -> bool {
        self.env_steps >= self.cfg.total_steps
    }

    fn checkpoint(&self) -> Checkpoint<f64> {
        Checkpoint {
            params: (*self.snapshot.params).clone(),
            history_len: self.cfg.episode.history_len,
            action_space: self.cfg.episode.actions.source().to_string(),
            snapshot_version: self.snapshot.version,
        }
    }

    fn update(&mut self, batch: &[Rollout]) -> Result<(), RunError> {
        let (next, metrics) = learner_step(batch, &self.snapshot, &mut self.opt, &self.cfg.loss)?;
        self.snapshot = next;
        for ro in batch {
            self.env_steps += ro.trajectory.len() as u64;
            let row = CurveRow {
                step: self.env_steps,
                episode: ro.episode,
                actor_id: ro.actor_id,
                scenario: ro.trajectory.scenario_id.clone(),
                episodic_return: ro.trajectory.episodic_return,
                policy_loss: metrics.policy_loss,
                value_loss: metrics.value_loss,
                entropy: metrics.entropy,
                mean_ratio: metrics.mean_ratio,
                snapshot_version: ro.policy_version,
            };
            if let Some(f) = &mut self.curve_file {
                writeln!(f, "{}", row.csv())?;
            }
            self.curve.push(row);
        }
        if let Some(f) = &mut self.curve_file {
            f.flush()?;
        }
        info!(
            "update {} batch {} steps {} return {:.3} entropy {:.4} ratio {:.4} staleness {}",
            metrics.version,
            metrics.batch_size,
            self.env_steps,
            metrics.mean_return,
            metrics.entropy,
            metrics.mean_ratio,
            metrics.max_staleness
        );
        self.updates.push(metrics);
        let every = self.cfg.checkpoint_every;
        if every > 0 && self.snapshot.version.is_multiple_of(every) {
            if let Some(dir) = &self.cfg.out_dir {
                let path = dir.join(format!("checkpoint-{:06}.ckpt", self.snapshot.version));
                self.checkpoint().save(&path)?;
            }
        }
        Ok(())
    }

    fn finish(mut self, actor_failures: u64) -> Result<TrainOutcome, RunError> {
        let checkpoint = self.checkpoint();
        if let Some(dir) = &self.cfg.out_dir {
            checkpoint.save(&dir.join("final.ckpt"))?;
        }
        if let Some(f) = &mut self.curve_file {
            f.flush()?;
        }
        Ok(TrainOutcome {
            checkpoint,
            curve: self.curve,
            updates: self.updates,
            env_steps: self.env_steps,
            actor_failures,
        })
    }
}

/// Per-actor source of scenario choices and seeds.
struct ActorRng(ChaCha8Rng);

impl ActorRng {
    fn new(seed: u64, actor_id: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(actor_id as u64 + 1);
        Self(rng)
    }

    /// `(scenario index, environment seed, policy seed)`
    fn next(&mut self, scenarios: usize) -> (usize, u64, u64) {
        (self.0.gen_range(0..scenarios), self.0.gen(), self.0.gen())
    }
}

fn act(
    cfg: &TrainConfig,
    snapshot: &ParamSnapshot,
    choice: (usize, u64, u64),
    actor_id: usize,
    episode: u64,
) -> Result<Rollout, RunError> {
    let (idx, env_seed, policy_seed) = choice;
    let sc = &cfg.scenarios[idx];
    let mut agent = LearnedAgent::new(snapshot.params.clone(), policy_seed, false);
    let out = run_episode(&sc.config, &sc.name, &mut agent, &cfg.episode, env_seed)?;
    Ok(Rollout {
        trajectory: out.trajectory,
        actor_id,
        episode,
        policy_version: snapshot.version,
    })
}

// consecutive failed episodes after which an actor gives up
const MAX_ACTOR_FAILURES: u64 = 16;

/// Trains until `total_steps` environment steps have been consumed.
///
/// With one actor, acting and learning alternate on the calling thread, which
/// makes the run exactly reproducible. With more, actors run on their own
/// threads and hand trajectories to the learner through a bounded queue.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, RunError> {
    cfg.validate()?;
    if cfg.num_actors == 1 {
        train_lockstep(cfg)
    } else {
        train_async(cfg)
    }
}

fn train_lockstep(cfg: &TrainConfig) -> Result<TrainOutcome, RunError> {
    let mut learner = Learner::new(cfg)?;
    let mut rng = ActorRng::new(cfg.seed, 0);
    let mut failures = 0;
    let mut consecutive = 0;
    let mut episode = 0;
    while !learner.done() {
        let choice = rng.next(cfg.scenarios.len());
        match act(cfg, &learner.snapshot, choice, 0, episode) {
            Ok(ro) => {
                consecutive = 0;
                learner.update(std::slice::from_ref(&ro))?;
            }
            Err(e) => {
                warn!("actor 0 episode {episode} failed: {e}");
                failures += 1;
                consecutive += 1;
                if consecutive >= MAX_ACTOR_FAILURES {
                    return Err(e);
                }
            }
        }
        episode += 1;
    }
    learner.finish(failures)
}

#[derive(Debug)]
struct ActorReport {
    failures: u64,
    last_error: Option<RunError>,
}

fn actor_loop(
    cfg: &TrainConfig,
    actor_id: usize,
    published: &ArcSwap<ParamSnapshot>,
    tx: Sender<Rollout>,
    stop: &AtomicBool,
) -> ActorReport {
    let mut rng = ActorRng::new(cfg.seed, actor_id);
    let mut report = ActorReport {
        failures: 0,
        last_error: None,
    };
    let mut consecutive = 0;
    let mut episode = 0;
    while !stop.load(Ordering::Relaxed) {
        let snapshot = published.load_full();
        let choice = rng.next(cfg.scenarios.len());
        match act(cfg, &snapshot, choice, actor_id, episode) {
            Ok(ro) => {
                consecutive = 0;
                if tx.send(ro).is_err() {
                    break;
                }
            }
            Err(e) => {
                warn!("actor {actor_id} episode {episode} failed, restarting: {e}");
                report.failures += 1;
                consecutive += 1;
                if consecutive >= MAX_ACTOR_FAILURES {
                    report.last_error = Some(e);
                    break;
                }
            }
        }
        episode += 1;
    }
    report
}

fn next_batch(rx: &Receiver<Rollout>, max: usize) -> Option<Vec<Rollout>> {
    let first = rx.recv_timeout(Duration::from_millis(200)).ok()?;
    let mut batch = vec![first];
    while batch.len() < max {
        match rx.try_recv() {
            Ok(ro) => batch.push(ro),
            Err(_) => break,
        }
    }
    Some(batch)
}

fn train_async(cfg: &TrainConfig) -> Result<TrainOutcome, RunError> {
    let mut learner = Learner::new(cfg)?;
    let published = ArcSwap::from_pointee(learner.snapshot.clone());
    let stop = AtomicBool::new(false);
    let (tx, rx) = bounded::<Rollout>(2 * cfg.num_actors);
    let started = Instant::now();

    let (result, reports) = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.num_actors)
            .map(|id| {
                let tx = tx.clone();
                let published = &published;
                let stop = &stop;
                scope.spawn(move || actor_loop(cfg, id, published, tx, stop))
            })
            .collect();
        drop(tx);

        let mut result = Ok(());
        while !learner.done() {
            match next_batch(&rx, cfg.max_batch) {
                Some(batch) => {
                    if let Err(e) = learner.update(&batch) {
                        result = Err(e);
                        break;
                    }
                    published.store(Arc::new(learner.snapshot.clone()));
                }
                None => {
                    if handles.iter().all(|h| h.is_finished()) {
                        break;
                    }
                }
            }
        }
        stop.store(true, Ordering::Relaxed);
        // unblock actors waiting on a full queue
        drop(rx);
        let reports: Vec<ActorReport> = handles
            .into_iter()
            .map(|h| h.join().expect("actor thread panicked"))
            .collect();
        (result, reports)
    });
    result?;
    let failures = reports.iter().map(|r| r.failures).sum();
    if !learner.done() {
        let err = reports
            .into_iter()
            .find_map(|r| r.last_error)
            .unwrap_or_else(|| RunError::Policy("all actors stopped".into()));
        return Err(err);
    }
    info!(
        "trained {} steps in {:.1?}",
        learner.env_steps,
        started.elapsed()
    );
    learner.finish(failures)
}
