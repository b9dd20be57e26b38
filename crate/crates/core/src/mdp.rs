//! Finite MDPs with seeded stochastic dynamics.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

pub const CHAIN_LEFT: usize = 0;
pub const CHAIN_RIGHT: usize = 1;

pub const GRID_NORTH: usize = 0;
pub const GRID_SOUTH: usize = 1;
pub const GRID_EAST: usize = 2;
pub const GRID_WEST: usize = 3;

/// Deterministic random stream (ChaCha8, explicit seed and stream id).
///
/// Two streams built from the same `(seed, stream)` pair produce identical
/// draws on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    /// Independent stream `stream` under the same seed.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// One interaction `(s, a, r, s', done)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub done: bool,
}

/// Provenance recorded alongside the tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MdpMeta {
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// JSON document form of an [`Mdp`]: dimensions plus row-major tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    /// `P(s'|s,a)` flattened as `[s][a][s']`.
    pub transition: Vec<f64>,
    /// `R(s,a)` flattened as `[s][a]`.
    pub reward_mean: Vec<f64>,
    pub reward_noise_sigma: f64,
    pub terminal: Vec<bool>,
    pub start: Vec<f64>,
    pub gamma_hint: f64,
    #[serde(default)]
    pub meta: MdpMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward_mean: Vec<f64>,
    reward_noise_sigma: f64,
    terminal: Vec<bool>,
    start: Vec<f64>,
    gamma_hint: f64,
    meta: MdpMeta,
}

impl TryFrom<MdpDocument> for Mdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let mdp = Mdp {
            n_states: doc.n_states,
            n_actions: doc.n_actions,
            transition: doc.transition,
            reward_mean: doc.reward_mean,
            reward_noise_sigma: doc.reward_noise_sigma,
            terminal: doc.terminal,
            start: doc.start,
            gamma_hint: doc.gamma_hint,
            meta: doc.meta,
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

impl From<Mdp> for MdpDocument {
    fn from(m: Mdp) -> Self {
        MdpDocument {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: m.transition,
            reward_mean: m.reward_mean,
            reward_noise_sigma: m.reward_noise_sigma,
            terminal: m.terminal,
            start: m.start,
            gamma_hint: m.gamma_hint,
            meta: m.meta,
        }
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::invalid(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Inverse-CDF draw from a probability row using one uniform variate.
fn sample_index(row: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, p) in row.iter().enumerate() {
        if *p > 0.0 {
            cumulative += p;
            last_positive = i;
            if u < cumulative {
                return i;
            }
        }
    }
    last_positive
}

impl Mdp {
    fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::invalid("MDP needs at least one state and one action"));
        }
        if self.transition.len() != ns * na * ns {
            return Err(Error::invalid("transition tensor has the wrong length"));
        }
        if self.reward_mean.len() != ns * na {
            return Err(Error::invalid("reward tensor has the wrong length"));
        }
        if self.terminal.len() != ns || self.start.len() != ns {
            return Err(Error::invalid("terminal/start vectors have the wrong length"));
        }
        if !(self.reward_noise_sigma.is_finite() && self.reward_noise_sigma >= 0.0) {
            return Err(Error::invalid("reward noise sigma must be finite and >= 0"));
        }
        if !(self.gamma_hint > 0.0 && self.gamma_hint < 1.0) {
            return Err(Error::invalid("gamma_hint must lie in (0, 1)"));
        }
        if self.reward_mean.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("reward tensor has a non-finite entry"));
        }
        check_distribution(&self.start, "start distribution")?;
        for s in 0..ns {
            for a in 0..na {
                check_distribution(self.transition_row(s, a), &format!("P(.|{s},{a})"))?;
                if self.terminal[s] {
                    if self.transition_row(s, a)[s] != 1.0 || self.reward_mean[s * na + a] != 0.0 {
                        return Err(Error::invalid(format!(
                            "terminal state {s} must self-loop with zero reward"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward_mean: Vec<f64>,
        reward_noise_sigma: f64,
        terminal: Vec<bool>,
        start: Vec<f64>,
        gamma_hint: f64,
    ) -> Result<Self> {
        Mdp::try_from(MdpDocument {
            n_states,
            n_actions,
            transition,
            reward_mean,
            reward_noise_sigma,
            terminal,
            start,
            gamma_hint,
            meta: MdpMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: MdpMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid("reward noise sigma must be finite and >= 0"));
        }
        self.reward_noise_sigma = sigma;
        Ok(self)
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Result<Self> {
        if start.len() != self.n_states {
            return Err(Error::invalid("start vector has the wrong length"));
        }
        check_distribution(&start, "start distribution")?;
        self.start = start;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward_mean[s * self.n_actions + a]
    }

    pub fn reward_noise_sigma(&self) -> f64 {
        self.reward_noise_sigma
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn gamma_hint(&self) -> f64 {
        self.gamma_hint
    }

    pub fn meta(&self) -> &MdpMeta {
        &self.meta
    }

    /// Samples one transition. `r` carries zero-mean Gaussian noise when the
    /// MDP has `σ > 0`; the noise draw happens after the successor draw.
    pub fn step(&self, rng: &mut RngStream, s: usize, a: usize) -> Result<Transition> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::invalid(format!("state {s} / action {a} out of range")));
        }
        if self.terminal[s] {
            return Err(Error::Protocol(format!("step from terminal state {s}")));
        }
        let s_next = sample_index(self.transition_row(s, a), rng.uniform());
        let mut r = self.reward(s, a);
        if self.reward_noise_sigma > 0.0 {
            r += self.reward_noise_sigma * rng.gaussian();
        }
        Ok(Transition {
            s,
            a,
            r,
            s_next,
            done: self.terminal[s_next],
        })
    }

    pub fn reset(&self, rng: &mut RngStream) -> usize {
        sample_index(&self.start, rng.uniform())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One-hot feature vector for a state id.
pub fn one_hot(state: usize, n_states: usize) -> Vec<f64> {
    let mut v = vec![0.0; n_states];
    v[state] = 1.0;
    v
}

/// `n`-state chain with actions left/right; entering the last state pays
/// `goal_reward` and terminates. Episodes start in state 0.
pub fn make_chain(n: usize, goal_reward: f64) -> Result<Mdp> {
    if n < 2 {
        return Err(Error::invalid(format!("chain needs n >= 2, got {n}")));
    }
    let na = 2;
    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    let mut terminal = vec![false; n];
    terminal[n - 1] = true;
    for s in 0..n {
        for a in 0..na {
            let next = if s == n - 1 {
                s
            } else if a == CHAIN_LEFT {
                s.saturating_sub(1)
            } else {
                s + 1
            };
            transition[(s * na + a) * n + next] = 1.0;
            if s != n - 1 && next == n - 1 {
                reward[s * na + a] = goal_reward;
            }
        }
    }
    let mut start = vec![0.0; n];
    start[0] = 1.0;
    Ok(Mdp::new(n, na, transition, reward, 0.0, terminal, start, 0.9)?.with_meta(MdpMeta {
        generator: format!("chain(n={n}, goal_reward={goal_reward})"),
        seed: None,
    }))
}

/// Grid of `width × height` cells, state id `y·width + x`.
///
/// Actions are N/S/E/W; bumping into a wall or the boundary keeps the agent
/// in place. Entering the goal pays `goal_reward` and terminates; every other
/// move pays `step_reward`. Wall cells are unreachable absorbing states. The
/// start distribution is uniform over free non-goal cells.
pub fn make_gridworld(
    width: usize,
    height: usize,
    walls: &[(usize, usize)],
    goal: (usize, usize),
    step_reward: f64,
    goal_reward: f64,
) -> Result<Mdp> {
    if width == 0 || height == 0 || width * height < 2 {
        return Err(Error::invalid("gridworld needs at least two cells"));
    }
    let inside = |(x, y): (usize, usize)| x < width && y < height;
    if !inside(goal) {
        return Err(Error::invalid("goal lies outside the grid"));
    }
    if let Some(w) = walls.iter().find(|w| !inside(**w)) {
        return Err(Error::invalid(format!("wall {w:?} lies outside the grid")));
    }
    if walls.contains(&goal) {
        return Err(Error::invalid("goal is a wall cell"));
    }
    let n = width * height;
    let na = 4;
    let id = |(x, y): (usize, usize)| y * width + x;
    let is_wall = |c: (usize, usize)| walls.contains(&c);
    let goal_id = id(goal);

    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    let mut terminal = vec![false; n];
    let mut start = vec![0.0; n];
    for y in 0..height {
        for x in 0..width {
            let s = id((x, y));
            if is_wall((x, y)) || s == goal_id {
                terminal[s] = true;
                for a in 0..na {
                    transition[(s * na + a) * n + s] = 1.0;
                }
                continue;
            }
            start[s] = 1.0;
            for a in 0..na {
                let target = match a {
                    GRID_NORTH => y.checked_sub(1).map(|y| (x, y)),
                    GRID_SOUTH => (y + 1 < height).then_some((x, y + 1)),
                    GRID_EAST => (x + 1 < width).then_some((x + 1, y)),
                    _ => x.checked_sub(1).map(|x| (x, y)),
                };
                let next = match target {
                    Some(c) if !is_wall(c) => id(c),
                    _ => s,
                };
                transition[(s * na + a) * n + next] = 1.0;
                reward[s * na + a] = if next == goal_id { goal_reward } else { step_reward };
            }
        }
    }
    let free: f64 = start.iter().sum();
    if free == 0.0 {
        return Err(Error::invalid("gridworld has no free start cell"));
    }
    start.iter_mut().for_each(|p| *p /= free);
    Ok(Mdp::new(n, na, transition, reward, 0.0, terminal, start, 0.9)?.with_meta(MdpMeta {
        generator: format!("gridworld({width}x{height}, goal={goal:?})"),
        seed: None,
    }))
}

/// Garnet-style random MDP: each `(s, a)` reaches `branching` distinct
/// successors with Dirichlet(1, …, 1) weights, and `R(s, a) ~ U[-1, 1]`.
/// No terminal states; uniform start.
pub fn make_garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Mdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::invalid("garnet needs at least one state and one action"));
    }
    if branching == 0 || branching > n_states {
        return Err(Error::invalid(format!(
            "branching must lie in [1, {n_states}], got {branching}"
        )));
    }
    let mut rng = RngStream::new(seed);
    let (ns, na) = (n_states, n_actions);
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let successors = rand::seq::index::sample(&mut rng, ns, branching).into_vec();
            let weights: Vec<f64> = (0..branching).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = weights.iter().sum();
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            for (succ, w) in successors.iter().zip(&weights) {
                row[*succ] = w / total;
            }
            reward[s * na + a] = rng.uniform() * 2.0 - 1.0;
        }
    }
    let start = vec![1.0 / ns as f64; ns];
    Ok(
        Mdp::new(ns, na, transition, reward, 0.0, vec![false; ns], start, 0.9)?
            .with_noise(noise_sigma)?
            .with_meta(MdpMeta {
                generator: format!("garnet({ns},{na},{branching},sigma={noise_sigma})"),
                seed: Some(seed),
            }),
    )
}

/// Declarative environment description, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvSpec {
    Chain {
        n: usize,
        #[serde(default = "default_goal_reward")]
        goal_reward: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        #[serde(default)]
        walls: Vec<(usize, usize)>,
        goal: (usize, usize),
        #[serde(default)]
        step_reward: f64,
        #[serde(default = "default_goal_reward")]
        goal_reward: f64,
    },
    Garnet {
        n_states: usize,
        n_actions: usize,
        branching: usize,
        #[serde(default)]
        noise_sigma: f64,
        seed: u64,
    },
}

fn default_goal_reward() -> f64 {
    1.0
}

impl EnvSpec {
    pub fn build(&self) -> Result<Mdp> {
        match self {
            EnvSpec::Chain { n, goal_reward } => make_chain(*n, *goal_reward),
            EnvSpec::Gridworld {
                width,
                height,
                walls,
                goal,
                step_reward,
                goal_reward,
            } => make_gridworld(*width, *height, walls, *goal, *step_reward, *goal_reward),
            EnvSpec::Garnet {
                n_states,
                n_actions,
                branching,
                noise_sigma,
                seed,
            } => make_garnet(*n_states, *n_actions, *branching, *noise_sigma, *seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_row_stochastic(m: &Mdp) {
        for s in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let total: f64 = m.transition_row(s, a).iter().sum();
                assert!((total - 1.0).abs() <= 1e-12, "row ({s},{a}) sums to {total}");
            }
        }
    }

    #[test]
    fn chain_step_is_deterministic() {
        let m = make_chain(3, 1.0).unwrap();
        let mut rng = RngStream::new(0);
        let t = m.step(&mut rng, 0, CHAIN_RIGHT).unwrap();
        assert_eq!(t, Transition { s: 0, a: CHAIN_RIGHT, r: 0.0, s_next: 1, done: false });
        let t = m.step(&mut rng, 1, CHAIN_RIGHT).unwrap();
        assert_eq!((t.r, t.s_next, t.done), (1.0, 2, true));
        let t = m.step(&mut rng, 0, CHAIN_LEFT).unwrap();
        assert_eq!(t.s_next, 0);
    }

    #[test]
    fn chain_two_states_has_one_decision_state() {
        let m = make_chain(2, 5.0).unwrap();
        assert!(!m.is_terminal(0));
        assert!(m.is_terminal(1));
        assert_row_stochastic(&m);
        assert!(make_chain(1, 1.0).is_err());
    }

    #[test]
    fn terminal_step_is_protocol_error() {
        let m = make_chain(3, 1.0).unwrap();
        let err = m.step(&mut RngStream::new(1), 2, CHAIN_LEFT).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn noise_free_reward_is_exact() {
        let m = make_garnet(6, 3, 2, 0.0, 11).unwrap();
        let mut rng = RngStream::new(5);
        for i in 0..200 {
            let (s, a) = (i % 6, i % 3);
            assert_eq!(m.step(&mut rng, s, a).unwrap().r, m.reward(s, a));
        }
    }

    #[test]
    fn replayed_seed_gives_identical_trajectory() {
        let m = make_garnet(8, 3, 3, 1.0, 4).unwrap();
        let run = || {
            let mut rng = RngStream::new(99);
            let mut s = m.reset(&mut rng);
            (0..1000)
                .map(|i| {
                    let t = m.step(&mut rng, s, i % 3).unwrap();
                    s = t.s_next;
                    t
                })
                .collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.r.to_bits() == y.r.to_bits() && x == y));
    }

    #[test]
    fn reset_examples() {
        let m = make_chain(4, 1.0).unwrap();
        assert_eq!(m.reset(&mut RngStream::new(3)), 0);

        let single = Mdp::new(1, 1, vec![1.0], vec![0.5], 0.0, vec![false], vec![1.0], 0.5).unwrap();
        assert_eq!(single.reset(&mut RngStream::new(3)), 0);

        let uniform = make_garnet(4, 1, 1, 0.0, 0).unwrap();
        let mut rng = RngStream::new(17);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[uniform.reset(&mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn gridworld_geometry() {
        let m = make_gridworld(2, 1, &[], (1, 0), 0.0, 1.0).unwrap();
        let t = m.step(&mut RngStream::new(0), 0, GRID_EAST).unwrap();
        assert_eq!((t.s_next, t.done, t.r), (1, true, 1.0));

        // 3x1 corridor with the middle walled off: the wall is never entered.
        let m = make_gridworld(3, 2, &[(1, 0)], (2, 0), -0.1, 1.0).unwrap();
        let mut rng = RngStream::new(2);
        for _ in 0..500 {
            let s = m.reset(&mut rng);
            assert_ne!(s, 1);
            for a in 0..4 {
                assert_ne!(m.step(&mut rng, s, a).unwrap().s_next, 1);
            }
        }
        assert_row_stochastic(&m);

        assert!(make_gridworld(2, 2, &[], (2, 0), 0.0, 1.0).is_err());
        assert!(make_gridworld(2, 2, &[(1, 1)], (1, 1), 0.0, 1.0).is_err());
    }

    #[test]
    fn garnet_properties() {
        let det = make_garnet(5, 2, 1, 0.0, 8).unwrap();
        for s in 0..5 {
            for a in 0..2 {
                assert_eq!(det.transition_row(s, a).iter().filter(|p| **p == 1.0).count(), 1);
            }
        }
        assert_eq!(make_garnet(7, 3, 3, 0.5, 42).unwrap(), make_garnet(7, 3, 3, 0.5, 42).unwrap());
        for seed in 0..100 {
            let m = make_garnet(10, 4, 3, 1.0, seed).unwrap();
            assert_row_stochastic(&m);
        }
        assert!(make_garnet(4, 2, 5, 0.0, 0).is_err());
        assert!(make_garnet(4, 2, 0, 0.0, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = make_garnet(4, 2, 2, 0.3, 9).unwrap();
        let text = m.to_json().unwrap();
        assert_eq!(Mdp::from_json(&text).unwrap(), m);

        let mut doc: MdpDocument = m.into();
        doc.transition[0] += 0.5;
        assert!(Mdp::try_from(doc).is_err());
    }
}
