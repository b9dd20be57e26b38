//! Central finite-difference check of [`backward`](super::backward).

use serde::Serialize;

use super::{backward, MlpSpec, Params};
use crate::error::{Error, Result};
use crate::mdp::RngStream;
use crate::softcore::LossKind;

/// Outcome of one random probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    /// `‖g_analytic − g_fd‖₂ / max(‖g_analytic‖₂, ‖g_fd‖₂, 1e-12)`.
    pub relative_error: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub dueling: bool,
    pub step: f64,
    pub probes: Vec<ProbeResult>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.probes.iter().map(|p| p.relative_error).fold(0.0, f64::max)
    }
}

pub const KINK_MARGIN: f64 = 1e-3;

/// A random (parameters, input, action, target) tuple away from every kink.
pub fn draw_probe(spec: &MlpSpec, rng: &mut RngStream) -> (Params, Vec<f64>, usize, f64) {
    loop {
        let mut params = Params::init(spec, rng);
        // Non-zero biases so dead units are not all exactly on the kink.
        for v in params.as_mut_slice() {
            *v += 0.1 * rng.gaussian();
        }
        let input: Vec<f64> = (0..spec.input_dim()).map(|_| rng.gaussian()).collect();
        let action = rng.below(spec.n_actions());
        let residual = 2.0 * rng.gaussian();
        let target = params.q_values(&input)[action] + residual;
        let near_rectifier = params
            .preactivations(&input)
            .iter()
            .flatten()
            .any(|z| z.abs() < KINK_MARGIN);
        let near_max_tie = params.dueling_heads(&input).is_some_and(|(_, adv)| {
            let mut sorted = adv.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.len() > 1 && sorted[0] - sorted[1] < KINK_MARGIN
        });
        if !near_rectifier && !near_max_tie && (residual.abs() - 1.0).abs() >= KINK_MARGIN {
            return (params, input, action, target);
        }
    }
}

/// Draws `probes` random (parameters, input, action, target) tuples and
/// compares the analytic gradient with central differences of step `h`.
///
/// Inputs are standard normal; targets are the current prediction plus a
/// N(0, 2²) offset so both Huber regimes are exercised. Draws that put a
/// rectifier input or the Huber residual within [`KINK_MARGIN`] of a kink
/// are redrawn, since central differences are meaningless across a kink.
pub fn gradient_check(spec: &MlpSpec, kind: LossKind, probes: usize, h: f64, seed: u64) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut rng = RngStream::new(seed);
    let mut results = Vec::with_capacity(probes);
    for _ in 0..probes {
        let (mut params, input, action, target) = draw_probe(spec, &mut rng);

        let analytic = backward(&params, &input, action, target, kind)?;
        let mut numeric = vec![0.0; params.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let original = params.as_slice()[k];
            params.as_mut_slice()[k] = original + h;
            let plus = params.loss(&input, action, target, kind);
            params.as_mut_slice()[k] = original - h;
            let minus = params.loss(&input, action, target, kind);
            params.as_mut_slice()[k] = original;
            *slot = (plus - minus) / (2.0 * h);
        }
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let a = analytic.as_slice();
        let diff = norm(&mut a.iter().zip(&numeric).map(|(x, y)| x - y));
        let na = norm(&mut a.iter().copied());
        let nn = norm(&mut numeric.iter().copied());
        results.push(ProbeResult {
            relative_error: diff / na.max(nn).max(1e-12),
            analytic_norm: na,
        });
    }
    Ok(GradCheckReport {
        dueling: spec.dueling(),
        step: h,
        probes: results,
    })
}
