//! Numerical kernel for the KL-regularized value operator.
//!
//! For action values `q`, a prior `p` and an inverse temperature `λ > 0` the
//! free energy is
//!
//! ```text
//! L*(q, p, λ) = (1/λ) · log Σ_a p(a) · exp(λ q(a))
//! ```
//!
//! which sits between the prior expectation `Σ p·q` (λ → 0) and `max q`
//! (λ → ∞). [`soft_value`] evaluates it in shifted form so every exponent is
//! non-positive; [`soft_value_naive`] is the unshifted textbook form and only
//! exists as a differential-testing reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` accepted by [`ActionDistribution::new`].
pub const DISTRIBUTION_TOL: f64 = 1e-12;

/// Per-state action values `Q(s, ·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVector(Vec<f64>);

impl QVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("q-vector must have at least one action"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("q[{i}] = {v} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn n_actions(&self) -> usize {
        self.0.len()
    }

    pub fn max(&self) -> f64 {
        max_of(&self.0)
    }

    /// Index of the largest value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for QVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A probability distribution over a finite action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionDistribution(Vec<f64>);

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution must have at least one action"));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::invalid(format!("probability {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights sum to zero"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::invalid("uniform distribution over zero actions"));
        }
        Ok(Self(vec![1.0 / n_actions as f64; n_actions]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ_a p(a) · values(a)`.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

impl TryFrom<Vec<f64>> for ActionDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ActionDistribution> for Vec<f64> {
    fn from(d: ActionDistribution) -> Self {
        d.0
    }
}

/// Inverse temperature (Lagrange multiplier) `λ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct InverseTemperature(f64);

impl InverseTemperature {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self(lambda))
        } else {
            Err(Error::invalid(format!(
                "inverse temperature must be positive and finite, got {lambda}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for InverseTemperature {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<InverseTemperature> for f64 {
    fn from(l: InverseTemperature) -> Self {
        l.0
    }
}

fn check_pair(q: &QVector, prior: &ActionDistribution) -> Result<()> {
    if q.n_actions() != prior.len() {
        return Err(Error::invalid(format!(
            "q has {} actions but prior has {}",
            q.n_actions(),
            prior.len()
        )));
    }
    Ok(())
}

pub(crate) fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Shifted free energy on raw slices. Zero-prior actions are skipped both
/// in the shift and in the partition sum.
///
/// `Σ p·expm1(x) / Σ p` is accumulated instead of `Σ p·exp(x)` so that the
/// small-λ regime does not lose the `O(λ)` term to cancellation.
pub(crate) fn soft_value_raw(q: &[f64], prior: &[f64], lambda: f64) -> f64 {
    let shift = q
        .iter()
        .zip(prior)
        .filter(|(_, p)| **p > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut mass = 0.0;
    let mut excess = 0.0;
    for (v, p) in q.iter().zip(prior) {
        if *p > 0.0 {
            mass += p;
            excess += p * (lambda * (v - shift)).exp_m1();
        }
    }
    shift + (excess / mass).ln_1p() / lambda
}

/// Robust free energy `V + (1/λ)·log Σ p·exp(λ(q − V))` with `V` the largest
/// prior-supported action value.
pub fn soft_value(q: &QVector, prior: &ActionDistribution, lambda: InverseTemperature) -> Result<f64> {
    check_pair(q, prior)?;
    Ok(soft_value_raw(q.values(), prior.probs(), lambda.get()))
}

/// Unshifted free energy `(1/λ)·log Σ p·exp(λ q)`.
///
/// Fails with [`Error::Overflow`] whenever an intermediate leaves the finite
/// range, which for large `λ·|q|` is the expected outcome.
pub fn soft_value_naive(
    q: &QVector,
    prior: &ActionDistribution,
    lambda: InverseTemperature,
) -> Result<f64> {
    check_pair(q, prior)?;
    let lambda = lambda.get();
    let partition: f64 = q
        .values()
        .iter()
        .zip(prior.probs())
        .filter(|(_, p)| **p > 0.0)
        .map(|(v, p)| p * (lambda * v).exp())
        .sum();
    let value = partition.ln() / lambda;
    if partition.is_finite() && partition > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow(format!(
            "partition sum {partition:e} not representable at lambda {lambda:e}"
        )))
    }
}

/// Closed-form maximizer of the Lagrangian: `π(a) ∝ p(a)·exp(λ(q(a) − max q))`.
pub fn soft_policy(
    q: &QVector,
    prior: &ActionDistribution,
    lambda: InverseTemperature,
) -> Result<ActionDistribution> {
    check_pair(q, prior)?;
    if prior.probs().iter().all(|p| *p == 0.0) {
        return Err(Error::invalid("prior has no support"));
    }
    let lambda = lambda.get();
    let shift = q
        .values()
        .iter()
        .zip(prior.probs())
        .filter(|(_, p)| **p > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = q
        .values()
        .iter()
        .zip(prior.probs())
        .map(|(v, p)| if *p > 0.0 { p * (lambda * (v - shift)).exp() } else { 0.0 })
        .collect();
    ActionDistribution::from_weights(&weights)
}

/// `KL(p || q)` in nats, with `0·log(0/·) = 0`.
pub fn kl_divergence(p: &ActionDistribution, q: &ActionDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid("distributions differ in length"));
    }
    let mut kl = 0.0;
    for (index, (pa, qa)) in p.probs().iter().zip(q.probs()).enumerate() {
        if *pa == 0.0 {
            continue;
        }
        if *qa == 0.0 {
            return Err(Error::SupportViolation { index, p: *pa });
        }
        kl += pa * (pa / qa).ln();
    }
    // Rounding can push an exact zero slightly negative.
    Ok(kl.max(0.0))
}

/// `Σ π·q − (1/λ)·KL(π || prior)`.
pub fn lagrangian_objective(
    pi: &ActionDistribution,
    q: &QVector,
    prior: &ActionDistribution,
    lambda: InverseTemperature,
) -> Result<f64> {
    check_pair(q, prior)?;
    if pi.len() != q.n_actions() {
        return Err(Error::invalid("policy and q-vector differ in length"));
    }
    let kl = kl_divergence(pi, prior)?;
    Ok(pi.expectation(q.values()) - kl / lambda.get())
}

/// Huber loss in the `d²` / `2|d| − 1` form, `d = target − prediction`.
pub fn huber_loss(target: f64, prediction: f64) -> f64 {
    let d = target - prediction;
    if d.abs() <= 1.0 {
        d * d
    } else {
        2.0 * d.abs() - 1.0
    }
}

/// `∂ huber_loss / ∂ prediction`.
pub fn huber_grad(target: f64, prediction: f64) -> f64 {
    let d = target - prediction;
    if d.abs() <= 1.0 {
        -2.0 * d
    } else {
        -2.0 * d.signum()
    }
}

/// Per-sample regression loss between a target and a prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Huber,
    Squared,
}

impl LossKind {
    pub fn value(self, target: f64, prediction: f64) -> f64 {
        match self {
            LossKind::Huber => huber_loss(target, prediction),
            LossKind::Squared => (target - prediction).powi(2),
        }
    }

    /// Derivative with respect to the prediction.
    pub fn grad(self, target: f64, prediction: f64) -> f64 {
        match self {
            LossKind::Huber => huber_grad(target, prediction),
            LossKind::Squared => -2.0 * (target - prediction),
        }
    }
}
