//! Feedforward Q-network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer is linear and has one unit per
//! flat action index, so a single forward pass scores every action.
//!
//! Checkpoint format (text):
//!
//! ```text
//! QNET v1
//! <layer dims separated by spaces>
//! <layer 0 weights, row-major (out x in)>
//! <layer 0 biases>
//! ...
//! ```
//!
//! Values are written with 17 significant digits so a save/load round trip
//! is exact.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()),
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Same shape as the owning network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Gradient {
            layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.biases.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= s);
            l.biases.iter_mut().for_each(|b| *b *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }
}

/// Per-layer activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn hidden(&self) -> &[Vec<f64>] {
        let n = self.acts.len();
        if n < 2 {
            &[]
        } else {
            &self.acts[1..n - 1]
        }
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

impl QNetwork {
    /// Scaled-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights,
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(QNetwork { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(QNetwork {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Builds a network from explicit layers; consecutive shapes must chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Contract(format!("layer {i} has inconsistent parameter shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Contract(format!(
                    "layer {i} input does not match previous output"
                )));
            }
        }
        Ok(QNetwork { layers })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Contract(format!("invalid layer dims {dims:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Q-values for every action.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = Activations::default();
        self.forward_cached(x, &mut cache)?;
        Ok(cache.acts.pop().expect("output layer"))
    }

    /// Forward pass that keeps every layer's activations in `cache`.
    pub fn forward_cached(&self, x: &[f64], cache: &mut Activations) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        cache.acts.resize_with(self.layers.len() + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.acts.split_at_mut(l + 1);
            layer.affine(&done[l], &mut rest[0]);
            if l != last {
                relu_in_place(&mut rest[0]);
            }
        }
        Ok(())
    }

    /// Gradient of `0.5 * td_error^2` through output unit `action`, where
    /// `td_error = Q(x, action) - target`.
    pub fn backward(&self, x: &[f64], action: usize, td_error: f64) -> Result<Gradient> {
        let mut cache = Activations::default();
        self.forward_cached(x, &mut cache)?;
        let mut grad = Gradient::zeros_like(self);
        self.backward_accumulate(&mut cache, action, td_error, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient for the forward pass held in `cache` to `grad`.
    pub fn backward_accumulate(
        &self,
        cache: &mut Activations,
        action: usize,
        td_error: f64,
        grad: &mut Gradient,
    ) -> Result<()> {
        if action >= self.output_dim() {
            return Err(Error::Contract(format!(
                "action {action} outside {} outputs",
                self.output_dim()
            )));
        }
        let Activations {
            acts,
            delta,
            delta_prev,
        } = cache;
        delta.clear();
        delta.resize(self.output_dim(), 0.0);
        delta[action] = td_error;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grad.layers[l];
            let input = &acts[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, a)| *gw += d * a);
            }
            if l == 0 {
                break;
            }
            delta_prev.clear();
            delta_prev.resize(layer.inputs, 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                delta_prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
            }
            // ReLU derivative of the hidden layer feeding this one.
            for (p, a) in delta_prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            std::mem::swap(delta, delta_prev);
        }
        Ok(())
    }

    /// `theta <- theta - lr * grad`. Rejects non-finite gradients without
    /// touching the parameters.
    pub fn sgd_update(&mut self, grad: &Gradient, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Training(format!("learning rate must be positive, got {lr}")));
        }
        if grad.layers.len() != self.layers.len()
            || grad
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.weights.len() != l.weights.len() || g.biases.len() != l.biases.len())
        {
            return Err(Error::Contract("gradient shape does not match network".into()));
        }
        if !grad.is_finite() {
            return Err(Error::Training("non-finite gradient, update rejected".into()));
        }
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= lr * d);
            l.biases.iter_mut().zip(&g.biases).for_each(|(b, d)| *b -= lr * d);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = String::from("QNET v1\n");
        let dims: Vec<String> = self.dims().iter().map(usize::to_string).collect();
        s.push_str(&dims.join(" "));
        s.push('\n');
        let mut line = |vals: &[f64]| {
            let mut first = true;
            for v in vals {
                if !first {
                    s.push(' ');
                }
                first = false;
                write!(s, "{v:.16e}").expect("writing to a String");
            }
            s.push('\n');
        };
        for l in &self.layers {
            line(&l.weights);
            line(&l.biases);
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("QNET v1") => {}
            other => return Err(Error::Checkpoint(format!("bad header {other:?}"))),
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("missing layer dims".into()))?
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|e| Error::Checkpoint(format!("layer dim {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Self::check_dims(&dims).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut read = |expected: usize, what: &str| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing {what}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|e| Error::Checkpoint(format!("{what} value {t:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != expected {
                return Err(Error::Checkpoint(format!(
                    "{what}: expected {expected} values, found {}",
                    vals.len()
                )));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("{what}: non-finite parameter")));
            }
            Ok(vals)
        };
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let weights = read(w[0] * w[1], &format!("layer {i} weights"))?;
            let biases = read(w[1], &format!("layer {i} biases"))?;
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weights,
                biases,
            });
        }
        Ok(QNetwork { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}
