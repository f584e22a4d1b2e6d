//! Multilayer perceptron patch classifier with hand-written backprop and Adam.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: alloc::vec![0.0; inputs * outputs],
            bias: alloc::vec![0.0; outputs],
        }
    }

    /// Computes `a·Wᵀ + b` for every row of `a`.
    fn affine(&self, a: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(a.rows(), self.outputs);
        for r in 0..a.rows() {
            let x = a.row(r);
            for (o, zo) in z.row_mut(r).iter_mut().enumerate() {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                *zo = self.bias[o] + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
        }
        z
    }
}

/// ReLU MLP ending in a single sigmoid unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Parameter gradients, shaped like [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
    }
}

/// Activations kept from a forward pass: the input of every layer and the
/// final probabilities.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    probs: Vec<f64>,
}

impl ForwardCache {
    pub fn predictions(&self) -> &[f64] {
        &self.probs
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidDims(format!(
            "need at least input and output dims, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidDims(format!("zero-width layer in {dims:?}")));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::InvalidDims(format!(
            "final dim must be 1, got {dims:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Uniform `±1/√fan_in` weights, zero biases, seeded with ChaCha8.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                let mut layer = Dense::zeros(fan_in, fan_out);
                for v in &mut layer.weights {
                    *v = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Every parameter set to zero; outputs 0.5 for any input.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        Ok(Mlp {
            layers: layer_dims
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// Rebuilds a model from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let model = Mlp { layers };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        validate_dims(&self.layer_dims())?;
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Shape(format!(
                    "layer {i} buffers do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(Error::Shape(format!(
                    "layer {i} input does not chain with previous output"
                )));
            }
        }
        if !self.params().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        if let Some(last) = self.layers.last() {
            dims.push(last.outputs);
        }
        dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters in canonical order: per layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn check_input(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feature width {} does not match model input {}",
                features.cols(),
                self.input_dim()
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("features"));
        }
        Ok(())
    }

    /// Probability of tumor for every row of `features`.
    pub fn forward(&self, features: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward_cached(features)?.probs)
    }

    pub fn forward_cached(&self, features: &Matrix) -> Result<ForwardCache> {
        self.check_input(features)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = features.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&a);
            inputs.push(a);
            if i == last {
                let probs = z.as_slice().iter().map(|&v| sigmoid(v)).collect();
                return Ok(ForwardCache { inputs, probs });
            }
            for r in 0..z.rows() {
                for v in z.row_mut(r) {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        unreachable!("model has at least one layer")
    }

    /// Gradient of `Σᵢ grad_wrt_pred[i] · predᵢ` with respect to every
    /// parameter.
    pub fn backward(&self, features: &Matrix, grad_wrt_pred: &[f64]) -> Result<Gradients> {
        let cache = self.forward_cached(features)?;
        self.backward_cached(&cache, grad_wrt_pred)
    }

    pub fn backward_cached(
        &self,
        cache: &ForwardCache,
        grad_wrt_pred: &[f64],
    ) -> Result<Gradients> {
        let batch = cache.probs.len();
        if grad_wrt_pred.len() != batch {
            return Err(Error::LengthMismatch {
                expected: batch,
                actual: grad_wrt_pred.len(),
            });
        }
        let dz: Vec<f64> = cache
            .probs
            .iter()
            .zip(grad_wrt_pred)
            .map(|(&p, &g)| g * p * (1.0 - p))
            .collect();
        let mut delta = Matrix::from_vec(batch, 1, dz)?;
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs, l.outputs))
            .collect();

        for (li, layer) in self.layers.iter().enumerate().rev() {
            let a = &cache.inputs[li];
            let g = &mut grads[li];
            for r in 0..batch {
                let d = delta.row(r);
                let x = a.row(r);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    g.bias[o] += dv;
                    for (gw, &xi) in g.weights[o * layer.inputs..(o + 1) * layer.inputs]
                        .iter_mut()
                        .zip(x)
                    {
                        *gw += dv * xi;
                    }
                }
            }
            if li == 0 {
                break;
            }
            // propagate through W, then through the previous ReLU
            let mut prev = Matrix::zeros(batch, layer.inputs);
            for r in 0..batch {
                let d = delta.row(r);
                let x = a.row(r);
                let out = prev.row_mut(r);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (pv, &w) in out
                        .iter_mut()
                        .zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs])
                    {
                        *pv += dv * w;
                    }
                }
                for (pv, &xi) in out.iter_mut().zip(x) {
                    if xi <= 0.0 {
                        *pv = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(Gradients { layers: grads })
    }
}

/// Adam moments for every parameter, in [`Mlp::params`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(model: &Mlp) -> Self {
        let n = model.param_count();
        AdamState {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidLearningRate(lr));
        }
        let n = model.param_count();
        let gn: usize = grads
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        if gn != n || self.m.len() != n || self.v.len() != n {
            return Err(Error::Shape(format!(
                "adam step over {n} params with {gn} grads and {} moments",
                self.m.len()
            )));
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradients"));
        }
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - libm::pow(Self::BETA1, t);
        let c2 = 1.0 - libm::pow(Self::BETA2, t);
        for (((p, &g), m), v) in model
            .params_mut()
            .zip(grads.iter())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + Self::EPS);
        }
        Ok(())
    }
}
