use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::NnError;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
    Softmax,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
            Activation::Softmax => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Relu,
            1 => Activation::Sigmoid,
            2 => Activation::Linear,
            3 => Activation::Softmax,
            _ => return None,
        })
    }

    /// Applies the activation row-wise (one row per example).
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv(sigmoid),
            Activation::Linear => z.clone(),
            Activation::Softmax => {
                let mut out = z.clone();
                for mut row in out.rows_mut() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                out
            }
        }
    }

    /// Maps dL/d(activation) to dL/d(pre-activation).
    fn backprop(self, pre: &Array2<f64>, post: &Array2<f64>, grad: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => {
                let mut g = grad;
                g.zip_mut_with(pre, |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
                g
            }
            Activation::Sigmoid => {
                let mut g = grad;
                g.zip_mut_with(post, |g, &s| *g *= s * (1.0 - s));
                g
            }
            Activation::Linear => grad,
            Activation::Softmax => {
                // J^T g = s * (g - <g, s>) per row
                let mut g = grad;
                for (mut g_row, s_row) in g.rows_mut().into_iter().zip(post.rows()) {
                    let dot = g_row.dot(&s_row);
                    g_row.zip_mut_with(&s_row, |gv, &sv| *gv = sv * (*gv - dot));
                }
                g
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer, `y = act(W x + b)` with `W` stored out × in.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub(crate) weights: Array2<f64>,
    pub(crate) biases: Array1<f64>,
    pub(crate) activation: Activation,
}

impl DenseLayer {
    pub fn new(
        weights: Array2<f64>,
        biases: Array1<f64>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        let (out_dim, in_dim) = weights.dim();
        if out_dim == 0 || in_dim == 0 {
            return Err(NnError::InvalidConfig(
                "layer dimensions must be at least 1".into(),
            ));
        }
        if biases.len() != out_dim {
            return Err(NnError::InvalidConfig(format!(
                "bias length {} does not match output width {out_dim}",
                biases.len()
            )));
        }
        if !weights.iter().chain(biases.iter()).all(|v| v.is_finite()) {
            return Err(NnError::NonFiniteParameter);
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(
            in_dim > 0 && out_dim > 0,
            "layer dimensions must be positive"
        );
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights =
            Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-limit..limit));
        Self {
            weights,
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// A stack of dense layers with optional inverted dropout after selected
/// layers' activations.
#[derive(Debug)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    dropout_rate: f64,
    dropout_after: BTreeSet<usize>,
    id: u64,
    generation: u64,
}

impl Clone for DenseNet {
    /// A clone is a distinct network: tapes recorded on one are foreign to
    /// the other.
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            dropout_rate: self.dropout_rate,
            dropout_after: self.dropout_after.clone(),
            id: fresh_id(),
            generation: 0,
        }
    }
}

/// Per-layer values cached by a forward pass.
#[derive(Debug, Clone)]
pub struct GradTape {
    net_id: u64,
    generation: u64,
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    training: bool,
}

impl GradTape {
    pub fn training(&self) -> bool {
        self.training
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    /// The dropout mask applied after layer `index`, already scaled by
    /// 1/(1 - rate). `None` when no dropout ran there.
    pub fn mask(&self, index: usize) -> Option<&Array2<f64>> {
        self.masks.get(index).and_then(|m| m.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Gradients of a scalar loss with respect to every parameter of a net and
/// with respect to its input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| {
            g.weights
                .iter()
                .chain(g.biases.iter())
                .all(|v| v.is_finite())
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.biases.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl DenseNet {
    pub fn new(
        layers: Vec<DenseLayer>,
        dropout_rate: f64,
        dropout_after: BTreeSet<usize>,
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidConfig(
                "a net needs at least one layer".into(),
            ));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(NnError::InvalidConfig(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::LayerChain {
                    index: i + 1,
                    expected: pair[1].in_dim(),
                    actual: pair[0].out_dim(),
                });
            }
        }
        if let Some(&bad) = dropout_after.iter().find(|&&i| i >= layers.len()) {
            return Err(NnError::InvalidConfig(format!(
                "dropout position {bad} beyond last layer"
            )));
        }
        Ok(Self {
            layers,
            dropout_rate,
            dropout_after,
            id: fresh_id(),
            generation: 0,
        })
    }

    /// Glorot-initialised stack. `dims` lists widths from input to output;
    /// `activations` has one entry per layer.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        dropout_rate: f64,
        dropout_after: BTreeSet<usize>,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(NnError::InvalidConfig(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(NnError::InvalidConfig(
                "layer widths must be positive".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &act)| DenseLayer::glorot(d[0], d[1], act, rng))
            .collect();
        Self::new(layers, dropout_rate, dropout_after)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn dropout_after(&self) -> &BTreeSet<usize> {
        &self.dropout_after
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    /// True when both nets have the same topology and bitwise-equal parameters.
    pub fn same_params(&self, other: &DenseNet) -> bool {
        self.dropout_after == other.dropout_after
            && self.dropout_rate.to_bits() == other.dropout_rate.to_bits()
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.activation == b.activation
                    && a.weights.dim() == b.weights.dim()
                    && a.weights
                        .iter()
                        .zip(b.weights.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                    && a.biases
                        .iter()
                        .zip(b.biases.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// SHA-256 over topology and little-endian parameter bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dropout_rate.to_le_bytes());
        for i in &self.dropout_after {
            h.update((*i as u64).to_le_bytes());
        }
        for layer in &self.layers {
            h.update([layer.activation.code()]);
            h.update((layer.in_dim() as u64).to_le_bytes());
            h.update((layer.out_dim() as u64).to_le_bytes());
            for v in layer.weights.iter().chain(layer.biases.iter()) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Single-example forward pass.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &[f64],
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<f64>, GradTape), NnError> {
        let batch = ArrayView2::from_shape((1, input.len()), input)
            .expect("a slice always forms a 1 × n view");
        let (out, tape) = self.forward_batch(batch, training, rng)?;
        Ok((out.row(0).to_vec(), tape))
    }

    /// Forward pass over a batch (one example per row). With `training`
    /// set, dropout masks keep each unit with probability 1 - rate and
    /// scale survivors by 1/(1 - rate).
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        input: ArrayView2<f64>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Array2<f64>, GradTape), NnError> {
        self.check_input(input.ncols())?;
        let n = self.layers.len();
        let mut tape = GradTape {
            net_id: self.id,
            generation: self.generation,
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
            training,
        };
        let keep = 1.0 - self.dropout_rate;
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weights.t()) + &layer.biases;
            let a = layer.activation.apply(&z);
            let mut next = a.clone();
            let mask = if training && self.dropout_rate > 0.0 && self.dropout_after.contains(&i) {
                let scale = 1.0 / keep;
                let m = Array2::from_shape_simple_fn(a.dim(), || {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                });
                next *= &m;
                Some(m)
            } else {
                None
            };
            tape.inputs.push(std::mem::replace(&mut x, next));
            tape.pre.push(z);
            tape.post.push(a);
            tape.masks.push(mask);
        }
        Ok((x, tape))
    }

    /// Inference-mode forward pass without a tape.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(input.ncols())?;
        let mut x = input.to_owned();
        for layer in &self.layers {
            let z = x.dot(&layer.weights.t()) + &layer.biases;
            x = layer.activation.apply(&z);
        }
        Ok(x)
    }

    /// Back-propagates `output_grad` (dL/d output, one row per example)
    /// through the pass recorded in `tape`. Gradients are summed over the
    /// batch; scale the output gradient for a mean loss.
    pub fn backward(
        &self,
        tape: &GradTape,
        output_grad: ArrayView2<f64>,
    ) -> Result<Gradients, NnError> {
        if tape.net_id != self.id || tape.generation != self.generation {
            return Err(NnError::TapeMismatch);
        }
        let expected = (tape.batch_size(), self.out_dim());
        if output_grad.dim() != expected {
            return Err(NnError::GradShape {
                expected,
                actual: output_grad.dim(),
            });
        }
        let mut grad = output_grad.to_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &tape.masks[i] {
                grad *= mask;
            }
            let gz = layer.activation.backprop(&tape.pre[i], &tape.post[i], grad);
            layers.push(LayerGradient {
                weights: gz.t().dot(&tape.inputs[i]),
                biases: gz.sum_axis(Axis(0)),
            });
            grad = gz.dot(&layer.weights);
        }
        layers.reverse();
        Ok(Gradients {
            layers,
            input: grad,
        })
    }

    fn check_input(&self, width: usize) -> Result<(), NnError> {
        if width != self.in_dim() {
            return Err(NnError::InputShape {
                expected: self.in_dim(),
                actual: width,
            });
        }
        Ok(())
    }
}
