//! Exact dynamic-programming oracles and tabular learners.
//!
//! All sweeps are synchronous (Jacobi), so successive sup-norm deltas of
//! every backup here contract by at least `γ`. Terminal states hold `Q = 0`
//! and never bootstrap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, RngStream, Transition};
use crate::numfmt::format_g9;
use crate::softcore::{self, ActionDistribution, InverseTemperature};

/// Tabular action values, row-major `[state][action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            q: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != n_states * n_actions {
            return Err(Error::invalid("q-table data has the wrong length"));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("q-table has a non-finite entry"));
        }
        Ok(Self { n_states, n_actions, q })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.q[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn max_row(&self, s: usize) -> f64 {
        softcore::max_of(self.row(s))
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        softcore::argmax(self.row(s))
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `state,action,q` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "state,action,q")?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                writeln!(out, "{s},{a},{}", format_g9(self.get(s, a)))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub gamma: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl DpConfig {
    pub fn new(gamma: f64, tol: f64, max_iters: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(Self { gamma, tol, max_iters })
    }
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

/// Stationary stochastic policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// The same action distribution in every state.
    pub fn from_prior(prior: &ActionDistribution, n_states: usize) -> Self {
        Self {
            n_states,
            n_actions: prior.len(),
            probs: prior.probs().repeat(n_states),
        }
    }

    /// ε-greedy with respect to `q` (ties broken toward the lowest index).
    pub fn epsilon_greedy(q: &QTable, epsilon: f64) -> Self {
        let na = q.n_actions();
        let mut probs = vec![epsilon / na as f64; q.n_states() * na];
        for s in 0..q.n_states() {
            probs[s * na + q.greedy_action(s)] += 1.0 - epsilon;
        }
        Self {
            n_states: q.n_states(),
            n_actions: na,
            probs,
        }
    }

    pub fn greedy(q: &QTable) -> Self {
        Self::epsilon_greedy(q, 0.0)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    fn check(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::invalid("policy shape does not match the MDP"));
        }
        Ok(())
    }
}

/// How the successor row `Q(s', ·)` is collapsed into a state value.
#[derive(Debug, Clone, Copy)]
pub enum Backup<'a> {
    Max,
    Soft {
        prior: &'a ActionDistribution,
        lambda: InverseTemperature,
    },
    Policy(&'a Policy),
}

impl Backup<'_> {
    fn state_value(&self, q: &QTable, s: usize) -> f64 {
        match self {
            Backup::Max => q.max_row(s),
            Backup::Soft { prior, lambda } => {
                softcore::soft_value_raw(q.row(s), prior.probs(), lambda.get())
            }
            Backup::Policy(pi) => pi.row(s).iter().zip(q.row(s)).map(|(p, v)| p * v).sum(),
        }
    }

    fn check(&self, mdp: &Mdp) -> Result<()> {
        match self {
            Backup::Max => Ok(()),
            Backup::Soft { prior, .. } if prior.len() != mdp.n_actions() => {
                Err(Error::invalid("prior length does not match the action count"))
            }
            Backup::Soft { .. } => Ok(()),
            Backup::Policy(pi) => pi.check(mdp),
        }
    }
}

/// Fixed point together with the sup-norm change of every sweep.
#[derive(Debug, Clone)]
pub struct DpTrace {
    pub q: QTable,
    pub deltas: Vec<f64>,
}

/// Iterates `T Q(s,a) = R(s,a) + γ Σ_{s'} P(s'|s,a) · backup(Q(s', ·))` from
/// `Q ≡ 0` until the sup-norm change drops below `cfg.tol`.
pub fn iterate(mdp: &Mdp, backup: Backup<'_>, cfg: &DpConfig) -> Result<DpTrace> {
    let cfg = DpConfig::new(cfg.gamma, cfg.tol, cfg.max_iters)?;
    backup.check(mdp)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = QTable::zeros(ns, na);
    let mut values = vec![0.0; ns];
    let mut deltas = Vec::new();
    for _ in 0..cfg.max_iters {
        for (s, v) in values.iter_mut().enumerate() {
            *v = if mdp.is_terminal(s) { 0.0 } else { backup.state_value(&q, s) };
        }
        let mut next = QTable::zeros(ns, na);
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            for a in 0..na {
                let expected: f64 = mdp
                    .transition_row(s, a)
                    .iter()
                    .zip(&values)
                    .map(|(p, v)| p * v)
                    .sum();
                next.set(s, a, mdp.reward(s, a) + cfg.gamma * expected);
            }
        }
        let delta = next.sup_distance(&q);
        deltas.push(delta);
        q = next;
        if delta < cfg.tol {
            return Ok(DpTrace { q, deltas });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
        delta: deltas.last().copied().unwrap_or(f64::INFINITY),
        last: Box::new(q),
    })
}

/// Optimal action values `Q*`.
pub fn value_iteration(mdp: &Mdp, cfg: &DpConfig) -> Result<QTable> {
    iterate(mdp, Backup::Max, cfg).map(|t| t.q)
}

/// Fixed point of the soft backup at a fixed inverse temperature.
pub fn soft_value_iteration(
    mdp: &Mdp,
    prior: &ActionDistribution,
    lambda: InverseTemperature,
    cfg: &DpConfig,
) -> Result<QTable> {
    iterate(mdp, Backup::Soft { prior, lambda }, cfg).map(|t| t.q)
}

/// `Q^π` for a fixed stochastic policy.
pub fn policy_evaluation(mdp: &Mdp, policy: &Policy, cfg: &DpConfig) -> Result<QTable> {
    iterate(mdp, Backup::Policy(policy), cfg).map(|t| t.q)
}

/// Expected discounted return `Σ_s start(s) Σ_a π(a|s) Q^π(s,a)`.
pub fn discounted_return(mdp: &Mdp, policy: &Policy, cfg: &DpConfig) -> Result<f64> {
    let q = policy_evaluation(mdp, policy, cfg)?;
    Ok((0..mdp.n_states())
        .map(|s| {
            let v: f64 = policy.row(s).iter().zip(q.row(s)).map(|(p, v)| p * v).sum();
            mdp.start()[s] * v
        })
        .sum())
}

/// Expected undiscounted return of an episode that ends on a terminal state
/// or after `horizon` steps, whichever comes first. This is the exact
/// counterpart of the Monte-Carlo evaluation protocol.
pub fn finite_horizon_return(mdp: &Mdp, policy: &Policy, horizon: usize) -> Result<f64> {
    policy.check(mdp)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    for _ in 0..horizon {
        for s in 0..ns {
            if mdp.is_terminal(s) {
                next[s] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for a in 0..na {
                let p_a = policy.row(s)[a];
                if p_a == 0.0 {
                    continue;
                }
                let cont: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                acc += p_a * (mdp.reward(s, a) + cont);
            }
            next[s] = acc;
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(mdp.start().iter().zip(&v).map(|(p, x)| p * x).sum())
}

fn td_update(table: &mut QTable, t: &Transition, alpha: f64, gamma: f64, bootstrap: f64) {
    let target = t.r + if t.done { 0.0 } else { gamma * bootstrap };
    let old = table.get(t.s, t.a);
    table.set(t.s, t.a, old + alpha * (target - old));
}

/// `Q(s,a) += α (r + γ max_a' Q(s',a') − Q(s,a))`, bootstrap dropped on `done`.
pub fn tabular_q_update(table: &mut QTable, t: &Transition, alpha: f64, gamma: f64) {
    let bootstrap = table.max_row(t.s_next);
    td_update(table, t, alpha, gamma, bootstrap);
}

/// As [`tabular_q_update`] with the max replaced by the soft value.
pub fn tabular_soft_q_update(
    table: &mut QTable,
    t: &Transition,
    alpha: f64,
    gamma: f64,
    prior: &ActionDistribution,
    lambda: InverseTemperature,
) {
    let bootstrap = softcore::soft_value_raw(table.row(t.s_next), prior.probs(), lambda.get());
    td_update(table, t, alpha, gamma, bootstrap);
}

/// `Σ_s start(s) (max_a q_est(s,a) − max_a q_star(s,a))`; positive means optimistic.
pub fn estimation_bias(q_est: &QTable, q_star: &QTable, start: &[f64]) -> Result<f64> {
    if q_est.n_states() != q_star.n_states()
        || q_est.n_actions() != q_star.n_actions()
        || start.len() != q_est.n_states()
    {
        return Err(Error::invalid("estimation_bias: shape mismatch"));
    }
    Ok(start
        .iter()
        .enumerate()
        .map(|(s, p)| p * (q_est.max_row(s) - q_star.max_row(s)))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    /// `α = 1 / (1 + n(s,a))^exponent` with `n` the prior visit count.
    VisitPower(f64),
}

impl AlphaSchedule {
    fn alpha(&self, visits: u64) -> f64 {
        match self {
            AlphaSchedule::Constant(a) => *a,
            AlphaSchedule::VisitPower(e) => (1.0 + visits as f64).powf(-e),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TabularRule<'a> {
    Hard,
    Soft {
        prior: &'a ActionDistribution,
        lambda: InverseTemperature,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct TabularConfig<'a> {
    pub gamma: f64,
    pub steps: u64,
    pub alpha: AlphaSchedule,
    /// Episodes are cut and restarted from the start distribution after
    /// this many steps.
    pub episode_len: u64,
    pub rule: TabularRule<'a>,
}

/// Tabular learning from `Q ≡ 0` under a uniformly random behaviour policy.
pub fn run_tabular(mdp: &Mdp, cfg: &TabularConfig<'_>, rng: &mut RngStream) -> Result<QTable> {
    if cfg.episode_len == 0 {
        return Err(Error::invalid("episode_len must be positive"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = QTable::zeros(ns, na);
    let mut visits = vec![0u64; ns * na];
    let mut s = mdp.reset(rng);
    let mut episode_steps = 0;
    for _ in 0..cfg.steps {
        let a = rng.below(na);
        let t = mdp.step(rng, s, a)?;
        let alpha = cfg.alpha.alpha(visits[s * na + a]);
        visits[s * na + a] += 1;
        match cfg.rule {
            TabularRule::Hard => tabular_q_update(&mut q, &t, alpha, cfg.gamma),
            TabularRule::Soft { prior, lambda } => {
                tabular_soft_q_update(&mut q, &t, alpha, cfg.gamma, prior, lambda)
            }
        }
        episode_steps += 1;
        if t.done || episode_steps >= cfg.episode_len {
            s = mdp.reset(rng);
            episode_steps = 0;
        } else {
            s = t.s_next;
        }
    }
    Ok(q)
}
