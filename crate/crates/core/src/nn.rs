//! A small fully-connected Q-network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer is linear. Weights of a layer are
//! stored `in_dim x out_dim` row-major, so the layer computes `Wᵀx + b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("a network needs at least an input and an output layer")]
    EmptyDims,
    #[error("layer widths must be positive")]
    ZeroWidth,
    #[error("input has length {got}, expected {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("action index {index} out of range for {outputs} outputs")]
    ActionIndex { index: usize, outputs: usize },
    #[error("learning rate {0} outside (0, 1)")]
    LearningRate(f64),
    #[error("gradient shapes do not match the network")]
    ShapeMismatch,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn apply(&self, input: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (i, &x) in input.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.out_dim..(i + 1) * self.out_dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
        if relu {
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Parameters θ of the Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
}

/// ∇θ of the loss, shape-congruent with a [`QNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.fill(0.0);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten())
    }

    pub fn is_congruent(&self, net: &QNetwork) -> bool {
        self.weights.len() == net.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&net.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.biases.len())
    }
}

/// Reusable activation buffers for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

/// Serializable parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_dims: Vec<usize>,
    /// Per-layer weights, row-major `in_dim x out_dim`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub step: u64,
}

impl QNetwork {
    /// Weights ~ U(-1/√fan_in, 1/√fan_in), biases zero.
    pub fn init<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self, NnError> {
        if layer_dims.len() < 2 {
            return Err(NnError::EmptyDims);
        }
        if layer_dims.contains(&0) {
            return Err(NnError::ZeroWidth);
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Dense {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Builds a network from explicit per-layer parameters.
    pub fn from_parameters(
        layer_dims: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, NnError> {
        if layer_dims.len() < 2 {
            return Err(NnError::EmptyDims);
        }
        if layer_dims.contains(&0) {
            return Err(NnError::ZeroWidth);
        }
        if weights.len() != layer_dims.len() - 1 || biases.len() != weights.len() {
            return Err(NnError::ShapeMismatch);
        }
        let layers = layer_dims
            .windows(2)
            .zip(weights.into_iter().zip(biases))
            .map(|(w, (weights, biases))| {
                if weights.len() != w[0] * w[1] || biases.len() != w[1] {
                    return Err(NnError::ShapeMismatch);
                }
                Ok(Dense {
                    in_dim: w[0],
                    out_dim: w[1],
                    weights,
                    biases,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty dims")
    }

    /// `(in_dim, out_dim)` of every weight matrix.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.layers[layer].weights
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.layers[layer].biases
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Mutable view of every parameter, weights first then biases, layer by layer.
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let (ws, bs): (Vec<_>, Vec<_>) = self
            .layers
            .iter_mut()
            .map(|l| (&mut l.weights, &mut l.biases))
            .unzip();
        ws.into_iter().flatten().chain(bs.into_iter().flatten())
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .chain(self.layers.iter().flat_map(|l| l.biases.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::InputLength {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut scratch = Scratch::default();
        self.forward_with(input, &mut scratch)?;
        Ok(scratch.acts.pop().expect("output layer"))
    }

    /// Forward pass that keeps every layer's activation in `scratch`;
    /// returns the output slice.
    pub fn forward_with<'s>(&self, input: &[f64], scratch: &'s mut Scratch) -> Result<&'s [f64], NnError> {
        self.check_input(input)?;
        let n = self.layers.len();
        scratch.acts.resize_with(n + 1, Vec::new);
        scratch.acts[0].clear();
        scratch.acts[0].extend_from_slice(input);
        for (k, layer) in self.layers.iter().enumerate() {
            let (head, tail) = scratch.acts.split_at_mut(k + 1);
            layer.apply(&head[k], &mut tail[0], k + 1 < n);
        }
        Ok(&scratch.acts[n])
    }

    /// Squared error `(z - Q(s, a))²` and its exact gradient.
    pub fn backward(&self, input: &[f64], action: usize, target: f64) -> Result<(f64, GradientSet), NnError> {
        let mut grads = GradientSet::zeros_like(self);
        let mut scratch = Scratch::default();
        let loss = self.accumulate_gradient(input, action, target, 1.0, &mut grads, &mut scratch)?;
        Ok((loss, grads))
    }

    /// Adds `weight * ∇θ (z - Q(s, a))²` into `grads` and returns the unweighted loss.
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        action: usize,
        target: f64,
        weight: f64,
        grads: &mut GradientSet,
        scratch: &mut Scratch,
    ) -> Result<f64, NnError> {
        if action >= self.output_dim() {
            return Err(NnError::ActionIndex {
                index: action,
                outputs: self.output_dim(),
            });
        }
        if !grads.is_congruent(self) {
            return Err(NnError::ShapeMismatch);
        }
        self.forward_with(input, scratch)?;
        let n = self.layers.len();
        let residual = target - scratch.acts[n][action];
        let loss = residual * residual;

        scratch.delta.clear();
        scratch.delta.resize(self.output_dim(), 0.0);
        scratch.delta[action] = -2.0 * residual * weight;

        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let act_in = &scratch.acts[k];
            let gw = &mut grads.weights[k];
            let gb = &mut grads.biases[k];
            for (g, d) in gb.iter_mut().zip(&scratch.delta) {
                *g += d;
            }
            for (i, &x) in act_in.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &mut gw[i * layer.out_dim..(i + 1) * layer.out_dim];
                for (g, d) in row.iter_mut().zip(&scratch.delta) {
                    *g += x * d;
                }
            }
            if k == 0 {
                break;
            }
            // Propagate through Wᵀ and the ReLU of the previous layer.
            scratch.delta_prev.clear();
            scratch.delta_prev.resize(layer.in_dim, 0.0);
            for (i, dp) in scratch.delta_prev.iter_mut().enumerate() {
                if act_in[i] <= 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.out_dim..(i + 1) * layer.out_dim];
                *dp = row.iter().zip(&scratch.delta).map(|(w, d)| w * d).sum();
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
        }
        Ok(loss)
    }

    /// θ ← θ − α∇L.
    pub fn sgd_step(&mut self, grads: &GradientSet, alpha: f64) -> Result<(), NnError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(NnError::LearningRate(alpha));
        }
        if !grads.is_congruent(self) {
            return Err(NnError::ShapeMismatch);
        }
        for (k, layer) in self.layers.iter_mut().enumerate() {
            for (p, g) in layer.weights.iter_mut().zip(&grads.weights[k]) {
                *p -= alpha * g;
            }
            for (p, g) in layer.biases.iter_mut().zip(&grads.biases[k]) {
                *p -= alpha * g;
            }
        }
        Ok(())
    }

    /// Deep copy used for the target network.
    pub fn clone_parameters(&self) -> QNetwork {
        self.clone()
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        Checkpoint {
            layer_dims: self.layer_dims.clone(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
            step,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        Self::from_parameters(&ck.layer_dims, ck.weights.clone(), ck.biases.clone())
    }
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}
