use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Fully connected layer `f(x) = sigma(W x + b)`, `W` stored row-major with
/// one row per output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerRepr", into = "LayerRepr")]
pub struct Layer {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) activation: Activation,
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    activation: Activation,
}

impl TryFrom<LayerRepr> for Layer {
    type Error = Error;

    fn try_from(r: LayerRepr) -> Result<Self> {
        Layer::new(r.w, r.b, r.activation)
    }
}

impl From<Layer> for LayerRepr {
    fn from(l: Layer) -> Self {
        LayerRepr {
            w: l.weights.chunks(l.inputs.max(1)).map(<[f64]>::to_vec).collect(),
            b: l.bias,
            activation: l.activation,
        }
    }
}

impl Layer {
    /// `w` has one row per output unit.
    pub fn new(w: Vec<Vec<f64>>, b: Vec<f64>, activation: Activation) -> Result<Self> {
        let outputs = w.len();
        let inputs = w.first().map_or(0, Vec::len);
        if b.len() != outputs {
            return Err(Error::DimensionMismatch {
                expected: outputs,
                found: b.len(),
            });
        }
        if let Some(row) = w.iter().find(|row| row.len() != inputs) {
            return Err(Error::DimensionMismatch {
                expected: inputs,
                found: row.len(),
            });
        }
        Ok(Self {
            weights: w.into_iter().flatten().collect(),
            bias: b,
            activation,
            inputs,
            outputs,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.weights[j * self.inputs..(j + 1) * self.inputs];
            *o = self.bias[j] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

/// Feed-forward sub-network producing one log-risk value. Hidden layers use
/// ReLU; the output layer is linear with its bias fixed at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Layer>", into = "Vec<Layer>")]
pub struct RiskNetwork {
    layers: Vec<Layer>,
}

impl TryFrom<Vec<Layer>> for RiskNetwork {
    type Error = Error;

    fn try_from(layers: Vec<Layer>) -> Result<Self> {
        RiskNetwork::from_layers(layers)
    }
}

impl From<RiskNetwork> for Vec<Layer> {
    fn from(n: RiskNetwork) -> Self {
        n.layers
    }
}

impl RiskNetwork {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let last = layers.last().ok_or(Error::Domain("network needs at least one layer"))?;
        if last.outputs != 1 || last.activation != Activation::Linear {
            return Err(Error::Domain("output layer must be a single linear unit"));
        }
        if last.bias.iter().any(|&b| b != 0.0) {
            return Err(Error::Domain("output layer bias must be zero"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    found: pair[1].inputs,
                });
            }
        }
        if layers[..layers.len() - 1].iter().any(|l| l.activation != Activation::Relu) {
            return Err(Error::Domain("hidden layers must use ReLU"));
        }
        Ok(Self { layers })
    }

    /// Variance-preserving uniform initialization in
    /// `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    weights,
                    bias: vec![0.0; fan_out],
                    activation: if l + 1 == sizes.len() - 1 {
                        Activation::Linear
                    } else {
                        Activation::Relu
                    },
                    inputs: fan_in,
                    outputs: fan_out,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Hidden widths, e.g. `[32, 32]`.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters flattened layer by layer, weights (row-major) before
    /// biases. The final entry is the output bias, which is always zero.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Same architecture with parameters taken from `values`, laid out as in
    /// [`RiskNetwork::parameters`].
    pub fn with_parameters(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                found: values.len(),
            });
        }
        if values[values.len() - 1] != 0.0 {
            return Err(Error::Domain("output layer bias must be zero"));
        }
        let mut out = self.clone();
        let mut k = 0;
        for l in &mut out.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&values[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&values[k..k + nb]);
            k += nb;
        }
        Ok(out)
    }

    /// Prediction-time forward pass (no dropout).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            next.resize(layer.outputs, 0.0);
            layer.affine(&cur, &mut next);
            if layer.activation == Activation::Relu {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            core::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Training forward pass. Hidden activations are dropped with
    /// probability `dropout` and survivors rescaled by `1 / (1 - dropout)`.
    pub(crate) fn forward_train(&self, x: &[f64], dropout: f64, rng: Option<&mut Rng>, cache: &mut Cache) -> f64 {
        cache.prepare(self);
        cache.acts[0].copy_from_slice(x);
        let keep_scale = 1.0 / (1.0 - dropout);
        let mut rng = rng;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = cache.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            layer.affine(input, out);
            if layer.activation == Activation::Relu {
                let scale = &mut cache.scales[l];
                for (v, s) in out.iter_mut().zip(scale.iter_mut()) {
                    let mut m = if *v > 0.0 { 1.0 } else { 0.0 };
                    if dropout > 0.0 {
                        let kept = match rng.as_deref_mut() {
                            Some(r) => r.random::<f64>() >= dropout,
                            None => true,
                        };
                        m *= if kept { keep_scale } else { 0.0 };
                    }
                    *v *= m;
                    *s = m;
                }
            }
        }
        cache.acts[self.layers.len()][0]
    }

    /// Accumulates `dout * d output / d params` into `grads`, using the
    /// activations from the last `forward_train` into `cache`.
    pub(crate) fn backward(&self, cache: &mut Cache, dout: f64, grads: &mut Gradients) {
        let depth = self.layers.len();
        cache.delta.clear();
        cache.delta.push(dout);
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let input = &cache.acts[l];
            let g = &mut grads.layers[l];
            for (j, &d) in cache.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut g.weights[j * layer.inputs..(j + 1) * layer.inputs];
                for (gw, &a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
                g.bias[j] += d;
            }
            if l == 0 {
                break;
            }
            cache.prev.clear();
            cache.prev.resize(layer.inputs, 0.0);
            for (j, &d) in cache.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[j * layer.inputs..(j + 1) * layer.inputs];
                for (p, &w) in cache.prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, &s) in cache.prev.iter_mut().zip(&cache.scales[l - 1]) {
                *p *= s;
            }
            core::mem::swap(&mut cache.delta, &mut cache.prev);
        }
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Default)]
pub(crate) struct Cache {
    acts: Vec<Vec<f64>>,
    scales: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl Cache {
    fn prepare(&mut self, net: &RiskNetwork) {
        if self.acts.len() == net.layers.len() + 1 {
            return;
        }
        self.acts = core::iter::once(net.input_dim())
            .chain(net.layers.iter().map(|l| l.outputs))
            .map(|k| vec![0.0; k])
            .collect();
        self.scales = net.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
    }
}

/// Parameter-shaped gradient (or optimizer moment) buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &RiskNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Flattened in the order of [`RiskNetwork::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}
