//! Information-theoretic deep Q-learning at desk scale.
//!
//! Soft Bellman targets built from a prior policy and an inverse temperature
//! λ, with λ scheduled from the running loss. DQN, double DQN and fixed-λ
//! soft Q-learning come along as baselines, and exact dynamic programming on
//! small MDPs provides the ground truth they are checked against.

pub mod agent;
pub mod approximator;
pub mod error;
pub mod evalharness;
pub mod exactdp;
pub mod mdp;
pub mod numfmt;
pub mod replay;
pub mod softcore;

pub use error::{Error, Result};
