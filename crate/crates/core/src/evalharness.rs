//! Offline evaluation protocol and the score statistics built on top of it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::approximator::Params;
use crate::error::{Error, Result};
use crate::exactdp::QTable;
use crate::mdp::{Mdp, RngStream};
use crate::numfmt::format_g9;
use crate::softcore;

/// Which states enter the `mean_max_q` average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxQAveraging {
    #[default]
    VisitedStates,
    StartStates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    pub episodes: usize,
    pub epsilon: f64,
    pub max_steps: usize,
    pub max_q_over: MaxQAveraging,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            episodes: 100,
            epsilon: 0.05,
            max_steps: 4500,
            max_q_over: MaxQAveraging::VisitedStates,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.max_steps == 0 {
            return Err(Error::InvalidConfig("evaluation needs episodes >= 1 and max_steps >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!("evaluation epsilon {} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_episodic_reward: f64,
    pub mean_max_q: f64,
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
}

/// Draws one uniform variate, then explores with probability `epsilon`.
pub fn epsilon_greedy_action(q: &[f64], epsilon: f64, rng: &mut RngStream) -> usize {
    if rng.uniform() < epsilon {
        rng.below(q.len())
    } else {
        softcore::argmax(q)
    }
}

/// The network's Q-values for every one-hot state.
pub fn network_q_table(params: &Params, n_states: usize) -> Result<QTable> {
    let n_actions = params.spec().n_actions();
    let data = (0..n_states).flat_map(|s| params.q_values_state(s)).collect();
    QTable::from_vec(n_states, n_actions, data)
}

/// Runs `protocol.episodes` ε-greedy episodes with unclipped rewards.
pub fn evaluate(params: &Params, mdp: &Mdp, protocol: &EvalProtocol, rng: &mut RngStream) -> Result<EvalResult> {
    protocol.validate()?;
    if params.spec().input_dim() != mdp.n_states() || params.spec().n_actions() != mdp.n_actions() {
        return Err(Error::invalid("network shape does not match the MDP"));
    }
    // States are one-hot, so one forward pass per state covers every lookup.
    let rows: Vec<Vec<f64>> = (0..mdp.n_states()).map(|s| params.q_values_state(s)).collect();
    evaluate_rows(&rows, mdp, protocol, rng)
}

/// [`evaluate`] against an explicit table of action values.
pub fn evaluate_table(q: &QTable, mdp: &Mdp, protocol: &EvalProtocol, rng: &mut RngStream) -> Result<EvalResult> {
    protocol.validate()?;
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::invalid("q-table shape does not match the MDP"));
    }
    let rows: Vec<Vec<f64>> = (0..mdp.n_states()).map(|s| q.row(s).to_vec()).collect();
    evaluate_rows(&rows, mdp, protocol, rng)
}

fn evaluate_rows(rows: &[Vec<f64>], mdp: &Mdp, protocol: &EvalProtocol, rng: &mut RngStream) -> Result<EvalResult> {
    let max_q: Vec<f64> = rows.iter().map(|r| softcore::max_of(r)).collect();
    let mut returns = Vec::with_capacity(protocol.episodes);
    let mut lengths = Vec::with_capacity(protocol.episodes);
    let mut q_sum = 0.0;
    let mut q_count = 0usize;
    for _ in 0..protocol.episodes {
        let mut s = mdp.reset(rng);
        let mut total = 0.0;
        let mut steps = 0;
        if protocol.max_q_over == MaxQAveraging::StartStates {
            q_sum += max_q[s];
            q_count += 1;
        }
        while steps < protocol.max_steps && !mdp.is_terminal(s) {
            if protocol.max_q_over == MaxQAveraging::VisitedStates {
                q_sum += max_q[s];
                q_count += 1;
            }
            let a = epsilon_greedy_action(&rows[s], protocol.epsilon, rng);
            let t = mdp.step(rng, s, a)?;
            total += t.r;
            steps += 1;
            s = t.s_next;
        }
        returns.push(total);
        lengths.push(steps);
    }
    Ok(EvalResult {
        mean_episodic_reward: returns.iter().sum::<f64>() / returns.len() as f64,
        mean_max_q: if q_count > 0 { q_sum / q_count as f64 } else { 0.0 },
        episode_returns: returns,
        episode_lengths: lengths,
    })
}

/// Reference points for score normalization: 0% at `score_random`, 100% at
/// `score_human` (for desk-scale MDPs, the optimal policy's score).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBaselines {
    pub score_random: f64,
    pub score_human: f64,
}

impl ScoreBaselines {
    pub fn new(score_random: f64, score_human: f64) -> Result<Self> {
        if score_human == score_random || !score_human.is_finite() || !score_random.is_finite() {
            return Err(Error::InvalidBaselines(score_random));
        }
        Ok(Self { score_random, score_human })
    }
}

/// `(score − random) / (human − random) · 100`.
pub fn normalize_score(score: f64, baselines: &ScoreBaselines) -> Result<f64> {
    let span = baselines.score_human - baselines.score_random;
    if span == 0.0 {
        return Err(Error::InvalidBaselines(baselines.score_random));
    }
    Ok((score - baselines.score_random) / span * 100.0)
}

/// `(iteration, value)` pairs with strictly increasing iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    points: Vec<(u64, f64)>,
}

impl Curve {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("curve iterations must be strictly increasing"));
        }
        if points.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid("curve values must be finite"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn iters(&self) -> impl Iterator<Item = u64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Curve> {
        Curve::new(self.points.iter().map(|(i, v)| (*i, f(*v))).collect())
    }
}

/// Exponential window: `y'[0] = y[0]`, `y'[k] = (1 − 1/τ) y'[k−1] + (1/τ) y[k]`.
pub fn exp_smooth(curve: &Curve, tau: f64) -> Result<Curve> {
    if !(tau >= 1.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("smoothing window must be >= 1, got {tau}")));
    }
    let w = 1.0 / tau;
    let mut acc: Option<f64> = None;
    let points = curve
        .points
        .iter()
        .map(|(i, y)| {
            let next = match acc {
                None => *y,
                Some(prev) => (1.0 - w) * prev + w * y,
            };
            acc = Some(next);
            (*i, next)
        })
        .collect();
    Ok(Curve { points })
}

/// Median; an even count averages the two middle values.
pub fn median_across(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty set"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("median input contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Pointwise median of curves sampled at identical iterations.
pub fn median_across_curves(curves: &[Curve]) -> Result<Curve> {
    let first = curves.first().ok_or_else(|| Error::invalid("median of no curves"))?;
    if curves.iter().any(|c| !c.iters().eq(first.iters())) {
        return Err(Error::invalid("curves are not aligned on the same iterations"));
    }
    let points = (0..first.len())
        .map(|k| {
            let column: Vec<f64> = curves.iter().map(|c| c.points[k].1).collect();
            median_across(&column).map(|m| (first.points[k].0, m))
        })
        .collect::<Result<_>>()?;
    Curve::new(points)
}

/// First iteration whose (already smoothed) value reaches `threshold`.
pub fn sample_efficiency(curve: &Curve, threshold: f64) -> Option<u64> {
    curve.points.iter().find(|(_, v)| *v >= threshold).map(|(i, _)| *i)
}

/// Rounds to `decimals` places, ties away from zero. Values within
/// floating-point noise of a tie (e.g. `136.14999999999998`) count as ties.
pub fn round_half_away(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let floor = scaled.floor();
    let frac = scaled - floor;
    let tie_tol = 1e-9 * scaled.abs().max(1.0);
    let rounded = if (frac - 0.5).abs() <= tie_tol {
        if scaled >= 0.0 {
            floor + 1.0
        } else {
            floor
        }
    } else {
        scaled.round()
    };
    rounded / scale
}

/// One row of the experiment summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub agent: String,
    pub seed: u64,
    pub best_score: f64,
    pub normalized: f64,
    pub sample_efficiency_iter: Option<u64>,
}

pub const SUMMARY_HEADER: &str = "task,agent,seed,best_score,normalized,sample_efficiency_iter";

/// Writes the summary CSV; an unattained sample-efficiency threshold is an empty field.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        let eff = r.sample_efficiency_iter.map(|i| i.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.task,
            r.agent,
            r.seed,
            format_g9(r.best_score),
            format_g9(r.normalized),
            eff
        )?;
    }
    Ok(())
}
