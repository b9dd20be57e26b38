use serde::{Deserialize, Serialize};

use super::{Gradients, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsPropSettings {
    pub learning_rate: f64,
    pub gradient_momentum: f64,
    pub squared_gradient_momentum: f64,
    pub min_squared_gradient: f64,
}

impl Default for RmsPropSettings {
    fn default() -> Self {
        Self {
            learning_rate: 2.5e-4,
            gradient_momentum: 0.95,
            squared_gradient_momentum: 0.95,
            min_squared_gradient: 0.01,
        }
    }
}

impl RmsPropSettings {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || !unit(self.gradient_momentum)
            || !unit(self.squared_gradient_momentum)
            || !(self.min_squared_gradient > 0.0)
        {
            return Err(Error::InvalidConfig(format!("invalid RMSProp settings {self:?}")));
        }
        Ok(())
    }
}

/// Centered RMSProp as used by the original DQN trainer:
///
/// ```text
/// g_avg  ← ρ_g g_avg  + (1 − ρ_g) g
/// g2_avg ← ρ_s g2_avg + (1 − ρ_s) g²
/// θ      ← θ − lr · g / sqrt(g2_avg − g_avg² + min_squared_gradient)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    settings: RmsPropSettings,
    grad_avg: Vec<f64>,
    sq_grad_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(settings: RmsPropSettings, param_count: usize) -> Self {
        Self {
            settings,
            grad_avg: vec![0.0; param_count],
            sq_grad_avg: vec![0.0; param_count],
        }
    }

    pub fn settings(&self) -> &RmsPropSettings {
        &self.settings
    }

    pub fn step(&mut self, params: &mut Params, grads: &Gradients) {
        assert_eq!(params.len(), grads.as_slice().len(), "gradient shape mismatch");
        assert_eq!(params.len(), self.grad_avg.len(), "optimizer shape mismatch");
        let RmsPropSettings {
            learning_rate,
            gradient_momentum: rho_g,
            squared_gradient_momentum: rho_s,
            min_squared_gradient,
        } = self.settings;
        let iter = params
            .as_mut_slice()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(self.grad_avg.iter_mut().zip(self.sq_grad_avg.iter_mut()));
        for ((theta, g), (avg, sq)) in iter {
            *avg = rho_g * *avg + (1.0 - rho_g) * g;
            *sq = rho_s * *sq + (1.0 - rho_s) * g * g;
            *theta -= learning_rate * g / (*sq - *avg * *avg + min_squared_gradient).sqrt();
        }
    }
}
