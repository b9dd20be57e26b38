//! Deep Q-learning training loop with the four bootstrap rules (DQN, double
//! DQN, scheduled-λ soft targets, fixed-λ soft targets), ε-greedy annealing,
//! and the running-loss λ scheduler.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::approximator::{sync_target, Gradients, MlpSpec, Params, RmsProp, RmsPropSettings, TargetParams};
use crate::error::{Error, Result};
use crate::evalharness::{self, EvalProtocol};
use crate::mdp::{one_hot, Mdp, RngStream, Transition};
use crate::numfmt::format_g9;
use crate::replay::ReplayMemory;
use crate::softcore::{self, ActionDistribution, InverseTemperature, LossKind};

/// RNG stream ids derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_REPLAY: u64 = 2;
const STREAM_EVAL_BASE: u64 = 1 << 32;

/// Which bootstrap rule builds the regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AgentKind {
    Dqn,
    Ddqn,
    /// Soft targets with λ taken from the running-loss scheduler.
    Din,
    /// Soft targets with a fixed λ.
    Sql { lambda: f64 },
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Ddqn => "ddqn",
            AgentKind::Din => "din",
            AgentKind::Sql { .. } => "sql",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentKind::Sql { lambda } => write!(f, "sql:{lambda}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    /// Accepts `dqn`, `ddqn`, `din` and `sql:<lambda>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dqn" => Ok(AgentKind::Dqn),
            "ddqn" => Ok(AgentKind::Ddqn),
            "din" => Ok(AgentKind::Din),
            other => {
                let lambda = other
                    .strip_prefix("sql:")
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown agent '{s}' (expected dqn, ddqn, din or sql:<lambda>)")))?
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("agent '{s}': lambda is not a number")))?;
                InverseTemperature::new(lambda).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                Ok(AgentKind::Sql { lambda })
            }
        }
    }
}

impl TryFrom<String> for AgentKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AgentKind> for String {
    fn from(k: AgentKind) -> Self {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync_period: u64,
    pub train_every: u64,
    pub total_iters: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_iters: u64,
    pub learn_start_iter: u64,
    /// Window of the running loss average, counted in gradient steps.
    pub scheduler_tau: f64,
    pub lambda_max: f64,
    /// `None` means uniform over the MDP's actions.
    pub prior: Option<ActionDistribution>,
    pub rmsprop: RmsPropSettings,
    pub hidden: Vec<usize>,
    pub dueling: bool,
    /// Loss driving the parameter gradient.
    pub loss: LossKind,
    /// Loss averaged by the λ scheduler.
    pub scheduler_loss: LossKind,
    pub checkpoint_period: u64,
    /// Training episodes are cut (without a terminal flag) after this many steps.
    pub max_episode_steps: u64,
    pub eval: EvalProtocol,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Full-size schedule: 5·10⁷ iterations, 10⁶ replay, sync every 10⁴,
    /// ε annealed over 10⁶ iterations after 5·10⁴ warm-up, τ = 10⁵.
    pub fn full_scale() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            replay_capacity: 1_000_000,
            target_sync_period: 10_000,
            train_every: 4,
            total_iters: 50_000_000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_anneal_iters: 1_000_000,
            learn_start_iter: 50_000,
            scheduler_tau: 100_000.0,
            lambda_max: 1e6,
            prior: None,
            rmsprop: RmsPropSettings::default(),
            hidden: vec![64, 64],
            dueling: false,
            loss: LossKind::Huber,
            scheduler_loss: LossKind::Huber,
            checkpoint_period: 100_000,
            max_episode_steps: 4500,
            eval: EvalProtocol::default(),
            seed: 0,
        }
    }

    /// Desk-scale schedule for small MDPs.
    pub fn desk() -> Self {
        Self {
            replay_capacity: 10_000,
            target_sync_period: 1_000,
            total_iters: 50_000,
            epsilon_anneal_iters: 10_000,
            learn_start_iter: 1_000,
            scheduler_tau: 100.0,
            rmsprop: RmsPropSettings {
                learning_rate: 1e-3,
                ..RmsPropSettings::default()
            },
            checkpoint_period: 1_000,
            max_episode_steps: 200,
            eval: EvalProtocol {
                episodes: 20,
                max_steps: 200,
                ..EvalProtocol::default()
            },
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("batch_size and replay_capacity must be positive");
        }
        if self.target_sync_period == 0 || self.train_every == 0 || self.checkpoint_period == 0 {
            return bad("periods must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return bad("need 0 <= epsilon_end <= epsilon_start <= 1");
        }
        if !(self.scheduler_tau >= 1.0) {
            return bad("scheduler_tau must be >= 1");
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return bad("lambda_max must be positive and finite");
        }
        if self.max_episode_steps == 0 {
            return bad("max_episode_steps must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        self.rmsprop.validate()?;
        self.eval.validate()
    }

    pub fn prior_for(&self, n_actions: usize) -> Result<ActionDistribution> {
        match &self.prior {
            Some(p) if p.len() == n_actions => Ok(p.clone()),
            Some(p) => Err(Error::InvalidConfig(format!(
                "prior has {} actions, environment has {n_actions}",
                p.len()
            ))),
            None => ActionDistribution::uniform(n_actions),
        }
    }
}

/// `1.0` before `learn_start_iter`, then linear to `epsilon_end` over
/// `epsilon_anneal_iters`, constant afterwards.
pub fn epsilon_at(cfg: &TrainConfig, iter: u64) -> f64 {
    if iter < cfg.learn_start_iter {
        return cfg.epsilon_start;
    }
    if cfg.epsilon_anneal_iters == 0 {
        return cfg.epsilon_end;
    }
    let elapsed = iter - cfg.learn_start_iter;
    if elapsed >= cfg.epsilon_anneal_iters {
        return cfg.epsilon_end;
    }
    let progress = elapsed as f64 / cfg.epsilon_anneal_iters as f64;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * progress
}

/// Running loss average `J ← (1 − 1/τ) J + (1/τ) loss` with `λ = 1/J`.
///
/// The first update seeds `J` with the loss itself; `λ` is capped at
/// `lambda_max`, which also covers `J = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScheduler {
    tau: f64,
    lambda_max: f64,
    j_avg: f64,
    initialized: bool,
}

impl LambdaScheduler {
    pub fn new(tau: f64, lambda_max: f64) -> Result<Self> {
        if !(tau >= 1.0 && tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("scheduler tau must be >= 1, got {tau}")));
        }
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::InvalidConfig("lambda_max must be positive".into()));
        }
        Ok(Self {
            tau,
            lambda_max,
            j_avg: 0.0,
            initialized: false,
        })
    }

    pub fn j_avg(&self) -> f64 {
        self.j_avg
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Current λ; `lambda_max` until the first update.
    pub fn lambda(&self) -> f64 {
        if !self.initialized || self.j_avg <= 0.0 {
            return self.lambda_max;
        }
        (1.0 / self.j_avg).min(self.lambda_max)
    }

    pub fn update(&mut self, batch_loss: f64) -> Result<f64> {
        if !(batch_loss >= 0.0 && batch_loss.is_finite()) {
            return Err(Error::invalid(format!("scheduler loss must be finite and >= 0, got {batch_loss}")));
        }
        if self.initialized {
            self.j_avg = (1.0 - 1.0 / self.tau) * self.j_avg + batch_loss / self.tau;
        } else {
            self.j_avg = batch_loss;
            self.initialized = true;
        }
        Ok(self.lambda())
    }
}

fn soft_or_max(kind: AgentKind, lambda: Option<InverseTemperature>) -> Result<Option<f64>> {
    match kind {
        AgentKind::Dqn | AgentKind::Ddqn => Ok(None),
        AgentKind::Din | AgentKind::Sql { .. } => lambda
            .map(|l| Some(l.get()))
            .ok_or_else(|| Error::InvalidConfig(format!("agent {kind} needs an inverse temperature"))),
    }
}

fn targets_with<FT, FO>(
    kind: AgentKind,
    batch: &[Transition],
    mut target_row: FT,
    mut online_row: FO,
    prior: &ActionDistribution,
    lambda: Option<InverseTemperature>,
    gamma: f64,
) -> Result<Vec<f64>>
where
    FT: FnMut(usize) -> Vec<f64>,
    FO: FnMut(usize) -> Vec<f64>,
{
    let lambda = soft_or_max(kind, lambda)?;
    batch
        .iter()
        .map(|t| {
            if t.done {
                return Ok(t.r);
            }
            let q_next = target_row(t.s_next);
            if q_next.len() != prior.len() {
                return Err(Error::invalid("prior length does not match the network output"));
            }
            let bootstrap = match (kind, lambda) {
                (AgentKind::Dqn, _) => softcore::max_of(&q_next),
                (AgentKind::Ddqn, _) => q_next[softcore::argmax(&online_row(t.s_next))],
                (_, Some(l)) => softcore::soft_value_raw(&q_next, prior.probs(), l),
                (_, None) => unreachable!("soft rules always carry lambda"),
            };
            Ok(t.r + gamma * bootstrap)
        })
        .collect()
}

/// Regression targets for a minibatch:
///
/// * DQN: `r + γ max_a Q⁻(s', a)`
/// * DDQN: `r + γ Q⁻(s', argmax_a Q(s', a))`
/// * DIN / SQL: `r + γ L*(Q⁻(s', ·), prior, λ)`
///
/// Terminal transitions drop the bootstrap term.
pub fn target_values(
    kind: AgentKind,
    batch: &[Transition],
    online: &Params,
    target: &TargetParams,
    prior: &ActionDistribution,
    lambda: Option<InverseTemperature>,
    gamma: f64,
) -> Result<Vec<f64>> {
    targets_with(
        kind,
        batch,
        |s| target.params().q_values_state(s),
        |s| online.q_values_state(s),
        prior,
        lambda,
        gamma,
    )
}

/// One checkpoint line of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iter: u64,
    pub mean_episodic_reward: f64,
    pub mean_max_q: f64,
    /// Mean gradient-step loss since the previous checkpoint (0 if none).
    pub mean_loss: f64,
    /// `inf` for the hard-max rules.
    pub lambda: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    records: Vec<RunRecord>,
}

pub const RUNLOG_HEADER: &str = "iter,mean_episodic_reward,mean_max_q,mean_loss,lambda,epsilon";

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: RunRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.iter <= last.iter {
                return Err(Error::invalid(format!(
                    "run log iterations must increase ({} after {})",
                    record.iter, last.iter
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{RUNLOG_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iter,
                format_g9(r.mean_episodic_reward),
                format_g9(r.mean_max_q),
                format_g9(r.mean_loss),
                format_g9(r.lambda),
                format_g9(r.epsilon)
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != RUNLOG_HEADER {
            return Err(Error::Format(format!("unexpected run log header '{header}'")));
        }
        let mut log = RunLog::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Format(format!("run log line {}: expected 6 fields", n + 2)));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("run log line {}: bad number '{}'", n + 2, fields[i])))
            };
            let iter = fields[0]
                .parse::<u64>()
                .map_err(|_| Error::Format(format!("run log line {}: bad iteration", n + 2)))?;
            log.push(RunRecord {
                iter,
                mean_episodic_reward: num(1)?,
                mean_max_q: num(2)?,
                mean_loss: num(3)?,
                lambda: num(4)?,
                epsilon: num(5)?,
            })?;
        }
        Ok(log)
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: RunLog,
    pub params: Params,
}

/// A training run that can be advanced step by step.
pub struct Trainer<'a> {
    mdp: &'a Mdp,
    kind: AgentKind,
    cfg: TrainConfig,
    prior: ActionDistribution,
    online: Params,
    target: TargetParams,
    /// `Q⁻(s, ·)` for every state, refreshed at each sync.
    target_rows: Vec<Vec<f64>>,
    optimizer: RmsProp,
    replay: ReplayMemory,
    scheduler: Option<LambdaScheduler>,
    env_rng: RngStream,
    replay_rng: RngStream,
    iter: u64,
    state: Option<usize>,
    episode_steps: u64,
    loss_sum: f64,
    loss_count: u64,
    checkpoints: u64,
    log: RunLog,
}

impl<'a> Trainer<'a> {
    pub fn new(mdp: &'a Mdp, kind: AgentKind, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let prior = cfg.prior_for(mdp.n_actions())?;
        let spec = MlpSpec::with_hidden(mdp.n_states(), &cfg.hidden, mdp.n_actions(), cfg.dueling)?;
        let online = Params::init(&spec, &mut RngStream::derive(cfg.seed, STREAM_INIT));
        let target = sync_target(&online);
        let scheduler = match kind {
            AgentKind::Din => Some(LambdaScheduler::new(cfg.scheduler_tau, cfg.lambda_max)?),
            AgentKind::Sql { lambda } => {
                InverseTemperature::new(lambda).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                None
            }
            _ => None,
        };
        let min_fill = cfg.learn_start_iter.clamp(1, cfg.replay_capacity as u64) as usize;
        let mut trainer = Self {
            mdp,
            kind,
            prior,
            optimizer: RmsProp::new(cfg.rmsprop, online.len()),
            replay: ReplayMemory::new(cfg.replay_capacity)?.with_min_fill(min_fill),
            scheduler,
            env_rng: RngStream::derive(cfg.seed, STREAM_ENV),
            replay_rng: RngStream::derive(cfg.seed, STREAM_REPLAY),
            target_rows: Vec::new(),
            online,
            target,
            iter: 0,
            state: None,
            episode_steps: 0,
            loss_sum: 0.0,
            loss_count: 0,
            checkpoints: 0,
            log: RunLog::new(),
            cfg,
        };
        trainer.refresh_target_rows();
        Ok(trainer)
    }

    fn refresh_target_rows(&mut self) {
        self.target_rows = (0..self.mdp.n_states())
            .map(|s| self.target.params().q_values_state(s))
            .collect();
    }

    pub fn iter(&self) -> u64 {
        self.iter
    }

    pub fn online(&self) -> &Params {
        &self.online
    }

    pub fn target(&self) -> &TargetParams {
        &self.target
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// λ the next gradient step will use (`inf` for the hard-max rules).
    pub fn current_lambda(&self) -> f64 {
        match (self.kind, &self.scheduler) {
            (AgentKind::Sql { lambda }, _) => lambda,
            (AgentKind::Din, Some(s)) => s.lambda(),
            _ => f64::INFINITY,
        }
    }

    pub fn scheduler(&self) -> Option<&LambdaScheduler> {
        self.scheduler.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.iter >= self.cfg.total_iters
    }

    /// One environment interaction plus whatever learning, syncing and
    /// evaluation falls on this iteration.
    pub fn step(&mut self) -> Result<()> {
        let t = self.iter;
        let s = match self.state {
            Some(s) => s,
            None => {
                self.episode_steps = 0;
                self.mdp.reset(&mut self.env_rng)
            }
        };
        let epsilon = epsilon_at(&self.cfg, t);
        let q = self.online.q_values_state(s);
        let a = evalharness::epsilon_greedy_action(&q, epsilon, &mut self.env_rng);
        let transition = self.mdp.step(&mut self.env_rng, s, a)?;
        self.replay.push(transition);
        self.episode_steps += 1;
        self.state = if transition.done || self.episode_steps >= self.cfg.max_episode_steps {
            None
        } else {
            Some(transition.s_next)
        };

        if t >= self.cfg.learn_start_iter
            && (t - self.cfg.learn_start_iter).is_multiple_of(self.cfg.train_every)
            && self.replay.is_ready()
        {
            self.learn()?;
        }
        self.iter += 1;
        if self.iter.is_multiple_of(self.cfg.target_sync_period) {
            self.target = sync_target(&self.online);
            self.refresh_target_rows();
        }
        if self.iter.is_multiple_of(self.cfg.checkpoint_period) {
            self.checkpoint(epsilon)?;
        }
        Ok(())
    }

    fn learn(&mut self) -> Result<()> {
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.replay_rng)?;
        let lambda = match self.kind {
            AgentKind::Dqn | AgentKind::Ddqn => None,
            _ => Some(InverseTemperature::new(self.current_lambda())?),
        };
        let online = &self.online;
        let rows = &self.target_rows;
        let targets = targets_with(
            self.kind,
            &batch,
            |s| rows[s].clone(),
            |s| online.q_values_state(s),
            &self.prior,
            lambda,
            self.cfg.gamma,
        )?;

        let n = self.mdp.n_states();
        let mut grads = Gradients::zeros(self.online.len());
        let mut loss_sum = 0.0;
        let mut sched_sum = 0.0;
        for (tr, y) in batch.iter().zip(&targets) {
            let input = one_hot(tr.s, n);
            let (loss, prediction) = self.online.accumulate_gradient(&input, tr.a, *y, self.cfg.loss, &mut grads);
            loss_sum += loss;
            sched_sum += self.cfg.scheduler_loss.value(*y, prediction);
        }
        let b = batch.len() as f64;
        let mean_loss = loss_sum / b;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { iter: self.iter, loss: mean_loss });
        }
        grads.scale(1.0 / b);
        self.optimizer.step(&mut self.online, &grads);
        if !self.online.is_finite() {
            return Err(Error::NonFiniteLoss { iter: self.iter, loss: f64::NAN });
        }
        self.loss_sum += mean_loss;
        self.loss_count += 1;
        if let Some(scheduler) = self.scheduler.as_mut() {
            scheduler.update(sched_sum / b)?;
        }
        Ok(())
    }

    fn checkpoint(&mut self, epsilon: f64) -> Result<()> {
        let mut rng = RngStream::derive(self.cfg.seed, STREAM_EVAL_BASE + self.checkpoints);
        self.checkpoints += 1;
        let eval = evalharness::evaluate(&self.online, self.mdp, &self.cfg.eval, &mut rng)?;
        let mean_loss = if self.loss_count > 0 {
            self.loss_sum / self.loss_count as f64
        } else {
            0.0
        };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        self.log.push(RunRecord {
            iter: self.iter,
            mean_episodic_reward: eval.mean_episodic_reward,
            mean_max_q: eval.mean_max_q,
            mean_loss,
            lambda: self.current_lambda(),
            epsilon,
        })
    }

    /// Advances until `iter` (capped at `total_iters`).
    pub fn run_until(&mut self, iter: u64) -> Result<()> {
        let stop = iter.min(self.cfg.total_iters);
        while self.iter < stop {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<TrainOutcome> {
        self.run_until(self.cfg.total_iters)?;
        Ok(TrainOutcome {
            log: self.log,
            params: self.online,
        })
    }
}

/// Runs a full training loop.
pub fn train(mdp: &Mdp, kind: AgentKind, cfg: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(mdp, kind, cfg.clone())?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_kind_parsing() {
        assert_eq!("DQN".parse::<AgentKind>().unwrap(), AgentKind::Dqn);
        assert_eq!("sql:0.5".parse::<AgentKind>().unwrap(), AgentKind::Sql { lambda: 0.5 });
        assert_eq!(AgentKind::Sql { lambda: 2.0 }.to_string(), "sql:2");
        assert!("sql".parse::<AgentKind>().is_err());
        assert!("sql:-1".parse::<AgentKind>().is_err());
        assert!("a3c".parse::<AgentKind>().is_err());
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig::full_scale();
        assert_eq!(epsilon_at(&cfg, 0), 1.0);
        assert_eq!(epsilon_at(&cfg, cfg.learn_start_iter - 1), 1.0);
        assert_eq!(epsilon_at(&cfg, cfg.learn_start_iter + cfg.epsilon_anneal_iters), 0.1);
        assert!((epsilon_at(&cfg, cfg.learn_start_iter + cfg.epsilon_anneal_iters / 2) - 0.55).abs() < 1e-15);
        assert_eq!(epsilon_at(&cfg, u64::MAX / 2), 0.1);
    }

    #[test]
    fn scheduler_examples() {
        let mut s = LambdaScheduler::new(2.0, 1e6).unwrap();
        assert_eq!(s.update(1.0).unwrap(), 1.0);
        assert_eq!(s.j_avg(), 1.0);
        assert_eq!(s.update(0.0).unwrap(), 2.0);
        assert_eq!(s.j_avg(), 0.5);

        let mut s = LambdaScheduler::new(2.0, 1e6).unwrap();
        assert_eq!(s.update(0.0).unwrap(), 1e6);
        assert!(s.update(-1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::full_scale().validate().is_ok());
        assert!(TrainConfig::desk().validate().is_ok());
        let bad = TrainConfig { epsilon_end: 0.9, epsilon_start: 0.5, ..TrainConfig::desk() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { scheduler_tau: 0.5, ..TrainConfig::desk() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { gamma: 1.0, ..TrainConfig::desk() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn runlog_rejects_non_increasing_iters() {
        let rec = RunRecord { iter: 5, mean_episodic_reward: 0.0, mean_max_q: 0.0, mean_loss: 0.0, lambda: 1.0, epsilon: 1.0 };
        let mut log = RunLog::new();
        log.push(rec).unwrap();
        assert!(log.push(rec).is_err());
    }

    #[test]
    fn runlog_csv_round_trip() {
        let mut log = RunLog::new();
        log.push(RunRecord { iter: 1000, mean_episodic_reward: 0.25, mean_max_q: 1.0 / 3.0, mean_loss: 0.0, lambda: f64::INFINITY, epsilon: 1.0 })
            .unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, format!("{RUNLOG_HEADER}\n1000,0.25,0.333333333,0,inf,1\n"));
        let back = RunLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.records()[0].lambda, f64::INFINITY);
        assert_eq!(back.records()[0].mean_episodic_reward, 0.25);
    }
}
