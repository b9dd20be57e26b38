//! Fully-connected Q-network with hand-written forward and backward passes.
//!
//! Parameters live in one flat `Vec<f64>`. Each dense layer contributes its
//! weight matrix (row-major, `out × in`) followed by its bias vector. With a
//! dueling head the trunk layers come first, then the value head
//! (`hidden → 1`), then the advantage head (`hidden → n_actions`).

mod checkpoint;
mod gradcheck;
mod rmsprop;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{draw_probe, gradient_check, GradCheckReport, ProbeResult, KINK_MARGIN};
pub use rmsprop::{RmsProp, RmsPropSettings};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::RngStream;
use crate::softcore::{self, LossKind, QVector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Network shape: `layer_sizes[0]` inputs, `layer_sizes[last]` actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    #[serde(default)]
    activation: Activation,
    #[serde(default)]
    dueling: bool,
}

#[derive(Debug, Clone, Copy)]
struct DenseShape {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl DenseShape {
    fn weight(&self, out: usize, inp: usize) -> usize {
        self.offset + out * self.inputs + inp
    }

    fn bias(&self, out: usize) -> usize {
        self.offset + self.outputs * self.inputs + out
    }

    fn len(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, dueling: bool) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output layer"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(Self {
            layer_sizes,
            activation: Activation::Relu,
            dueling,
        })
    }

    /// `inputs → hidden… → n_actions`.
    pub fn with_hidden(inputs: usize, hidden: &[usize], n_actions: usize, dueling: bool) -> Result<Self> {
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions);
        Self::new(sizes, dueling)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dueling(&self) -> bool {
        self.dueling
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_actions(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Dense layers in storage order.
    fn shapes(&self) -> Vec<DenseShape> {
        let sizes = &self.layer_sizes;
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        if self.dueling {
            let trunk = &sizes[..sizes.len() - 1];
            pairs.extend(trunk.windows(2).map(|w| (w[0], w[1])));
            let hidden = *trunk.last().expect("non-empty trunk");
            pairs.push((hidden, 1));
            pairs.push((hidden, self.n_actions()));
        } else {
            pairs.extend(sizes.windows(2).map(|w| (w[0], w[1])));
        }
        let mut offset = 0;
        pairs
            .into_iter()
            .map(|(inputs, outputs)| {
                let shape = DenseShape { inputs, outputs, offset };
                offset += shape.len();
                shape
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(DenseShape::len).sum()
    }
}

/// Network parameters `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    spec: MlpSpec,
    data: Vec<f64>,
}

/// Lagged copy `θ⁻` used for bootstrap targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetParams(Params);

impl TargetParams {
    pub fn params(&self) -> &Params {
        &self.0
    }
}

/// Deep copy of the online parameters.
pub fn sync_target(params: &Params) -> TargetParams {
    TargetParams(params.clone())
}

/// Flat gradient with the same layout as [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(Vec<f64>);

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }
}

/// Intermediate values of one forward pass.
struct Tape {
    /// Input followed by every post-activation trunk output.
    activations: Vec<Vec<f64>>,
    /// Pre-activation of every hidden trunk layer.
    pre: Vec<Vec<f64>>,
    /// Dueling head outputs `(v, adv)`.
    heads: Option<(f64, Vec<f64>)>,
    q: Vec<f64>,
}

impl Params {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            spec: spec.clone(),
            data: vec![0.0; spec.param_count()],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut RngStream) -> Self {
        let mut params = Self::zeros(spec);
        for shape in spec.shapes() {
            let limit = (6.0 / (shape.inputs + shape.outputs) as f64).sqrt();
            for w in &mut params.data[shape.offset..shape.offset + shape.inputs * shape.outputs] {
                *w = (2.0 * rng.uniform() - 1.0) * limit;
            }
        }
        params
    }

    pub fn from_flat(spec: &MlpSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                data.len()
            )));
        }
        Ok(Self { spec: spec.clone(), data })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn dense(&self, shape: &DenseShape, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..shape.outputs).map(|j| self.data[shape.bias(j)]));
        for (i, x) in input.iter().enumerate() {
            // One-hot inputs are mostly zeros.
            if *x == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.data[shape.weight(j, i)] * x;
            }
        }
    }

    fn run(&self, input: &[f64]) -> Tape {
        let shapes = self.spec.shapes();
        let act = self.spec.activation;
        let trunk_len = if self.spec.dueling { shapes.len() - 2 } else { shapes.len() - 1 };
        let mut activations = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(trunk_len);
        for shape in &shapes[..trunk_len] {
            let mut z = Vec::new();
            self.dense(shape, activations.last().expect("input present"), &mut z);
            activations.push(z.iter().map(|v| act.apply(*v)).collect());
            pre.push(z);
        }
        let hidden = activations.last().expect("input present");
        if self.spec.dueling {
            let mut v = Vec::new();
            let mut adv = Vec::new();
            self.dense(&shapes[trunk_len], hidden, &mut v);
            self.dense(&shapes[trunk_len + 1], hidden, &mut adv);
            let adv_max = softcore::max_of(&adv);
            let q = adv.iter().map(|a| v[0] + (a - adv_max)).collect();
            Tape {
                activations,
                pre,
                heads: Some((v[0], adv)),
                q,
            }
        } else {
            let mut q = Vec::new();
            self.dense(&shapes[trunk_len], hidden, &mut q);
            Tape {
                activations,
                pre,
                heads: None,
                q,
            }
        }
    }

    /// Hidden-layer pre-activations, one vector per trunk layer.
    pub fn preactivations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        self.run(input).pre
    }

    /// Q-values for `input` without shape validation.
    pub fn q_values(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.spec.input_dim());
        self.run(input).q
    }

    /// Q-values for a one-hot encoded state.
    pub fn q_values_state(&self, state: usize) -> Vec<f64> {
        self.q_values(&crate::mdp::one_hot(state, self.spec.input_dim()))
    }

    /// Dueling head outputs `(v, adv)` for inspection; `None` without a dueling head.
    pub fn dueling_heads(&self, input: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.run(input).heads
    }

    /// Loss of the taken action's prediction against `target`.
    pub fn loss(&self, input: &[f64], action: usize, target: f64, kind: LossKind) -> f64 {
        kind.value(target, self.run(input).q[action])
    }

    /// Adds `∂ loss(target, Q(input, action)) / ∂θ` into `grads` and returns
    /// `(loss, prediction)`.
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        action: usize,
        target: f64,
        kind: LossKind,
        grads: &mut Gradients,
    ) -> (f64, f64) {
        let shapes = self.spec.shapes();
        let act = self.spec.activation;
        let tape = self.run(input);
        let prediction = tape.q[action];
        let dq = kind.grad(target, prediction);
        let g = &mut grads.0;

        let add_dense = |g: &mut Vec<f64>, shape: &DenseShape, x: &[f64], delta: &[f64]| {
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (i, xi) in x.iter().enumerate() {
                    g[shape.weight(j, i)] += d * xi;
                }
                g[shape.bias(j)] += d;
            }
        };
        let back_dense = |shape: &DenseShape, delta: &[f64], into: &mut [f64]| {
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (i, slot) in into.iter_mut().enumerate() {
                    *slot += self.data[shape.weight(j, i)] * d;
                }
            }
        };

        let trunk_len = tape.pre.len();
        let hidden = &tape.activations[trunk_len];
        let mut delta = vec![0.0; hidden.len()];
        if let Some((_, adv)) = &tape.heads {
            let value_shape = &shapes[trunk_len];
            let adv_shape = &shapes[trunk_len + 1];
            let best = softcore::argmax(adv);
            let mut d_adv = vec![0.0; adv.len()];
            d_adv[action] += dq;
            d_adv[best] -= dq;
            add_dense(g, value_shape, hidden, &[dq]);
            add_dense(g, adv_shape, hidden, &d_adv);
            back_dense(value_shape, &[dq], &mut delta);
            back_dense(adv_shape, &d_adv, &mut delta);
        } else {
            let out_shape = &shapes[trunk_len];
            let mut d_out = vec![0.0; out_shape.outputs];
            d_out[action] = dq;
            add_dense(g, out_shape, hidden, &d_out);
            back_dense(out_shape, &d_out, &mut delta);
        }
        for l in (0..trunk_len).rev() {
            for (d, z) in delta.iter_mut().zip(&tape.pre[l]) {
                *d *= act.derivative(*z);
            }
            add_dense(g, &shapes[l], &tape.activations[l], &delta);
            if l > 0 {
                let mut below = vec![0.0; shapes[l].inputs];
                back_dense(&shapes[l], &delta, &mut below);
                delta = below;
            }
        }
        (kind.value(target, prediction), prediction)
    }
}

/// Network evaluation with shape and finiteness checks.
pub fn forward(params: &Params, input: &[f64]) -> Result<QVector> {
    if input.len() != params.spec.input_dim() {
        return Err(Error::invalid(format!(
            "input has length {}, network expects {}",
            input.len(),
            params.spec.input_dim()
        )));
    }
    QVector::new(params.q_values(input))
}

/// Gradient of the per-sample loss w.r.t. every parameter; only the taken
/// action's output contributes.
pub fn backward(params: &Params, input: &[f64], action: usize, target: f64, kind: LossKind) -> Result<Gradients> {
    if input.len() != params.spec.input_dim() {
        return Err(Error::invalid("input length does not match the network"));
    }
    if action >= params.spec.n_actions() {
        return Err(Error::invalid(format!("action {action} out of range")));
    }
    if !target.is_finite() {
        return Err(Error::invalid("target must be finite"));
    }
    let mut grads = Gradients::zeros(params.len());
    params.accumulate_gradient(input, action, target, kind, &mut grads);
    Ok(grads)
}
