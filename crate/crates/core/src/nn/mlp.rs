use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::rng::RngStream;
use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(pre);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine layer followed by an activation. `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

/// Values retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<DenseMatrix>,
    pre: Vec<DenseMatrix>,
    dropout: Vec<Option<DenseMatrix>>,
}

/// Inverted-dropout settings for a training forward pass.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut RngStream,
}

const RELU_BIAS_INIT: f64 = 0.1;

impl MlpParams {
    /// Randomly initialised MLP with layer widths `dims[0] → dims[1] → …`.
    ///
    /// ReLU layers use He-uniform initialisation and a small positive bias so
    /// that units start alive on all-ones inputs; the others Glorot-uniform
    /// with zero bias.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::dim(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = match activation {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                DenseLayer {
                    weight: DenseMatrix::from_fn(fan_in, fan_out, |_, _| {
                        rng.uniform_range(-limit, limit)
                    }),
                    bias: vec![if activation == Activation::Relu { RELU_BIAS_INIT } else { 0.0 }; fan_out],
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("mlp needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::dim(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: DenseMatrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn forward(&self, input: &DenseMatrix) -> Result<(DenseMatrix, MlpCache)> {
        self.forward_with(input, None)
    }

    /// Forward pass; with `dropout` set, hidden-layer outputs are dropped and
    /// rescaled by `1/(1-rate)`. The final layer is never dropped.
    pub fn forward_with(
        &self,
        input: &DenseMatrix,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<(DenseMatrix, MlpCache)> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim(format!(
                "mlp expects {} input columns, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let n_layers = self.layers.len();
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(n_layers),
            pre: Vec::with_capacity(n_layers),
            dropout: Vec::with_capacity(n_layers),
        };
        let mut current = input.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut pre = current.matmul(&layer.weight)?;
            pre.add_row_broadcast(&layer.bias);
            let mut out = pre.map(|v| layer.activation.apply(v));
            let mut keep = None;
            if let Some(d) = dropout.as_mut() {
                if idx + 1 < n_layers && d.rate > 0.0 {
                    let scale = 1.0 / (1.0 - d.rate);
                    let mask = DenseMatrix::from_fn(out.rows(), out.cols(), |_, _| {
                        if d.rng.bernoulli(d.rate) {
                            0.0
                        } else {
                            scale
                        }
                    });
                    for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
                        *o *= m;
                    }
                    keep = Some(mask);
                }
            }
            cache.inputs.push(std::mem::replace(&mut current, out));
            cache.pre.push(pre);
            cache.dropout.push(keep);
        }
        Ok((current, cache))
    }

    /// Exact reverse-mode gradients. Returns `(parameter gradients, ∂/∂input)`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_output: &DenseMatrix,
    ) -> Result<(MlpParams, DenseMatrix)> {
        if cache.pre.len() != self.layers.len() {
            return Err(Error::dim("cache does not match this mlp"));
        }
        let last = &cache.pre[cache.pre.len() - 1];
        if grad_output.shape() != last.shape() {
            return Err(Error::dim(format!(
                "grad_output {:?} does not match output {:?}",
                grad_output.shape(),
                last.shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &cache.dropout[idx] {
                for (g, m) in upstream.data_mut().iter_mut().zip(mask.data()) {
                    *g *= m;
                }
            }
            let pre = &cache.pre[idx];
            let mut d_pre = upstream;
            for (g, &z) in d_pre.data_mut().iter_mut().zip(pre.data()) {
                *g *= layer.activation.derivative(z);
            }
            let d_weight = cache.inputs[idx].t_matmul(&d_pre)?;
            let d_bias = d_pre.column_sums();
            upstream = d_pre.matmul_t(&layer.weight)?;
            grads.push(DenseLayer {
                weight: d_weight,
                bias: d_bias,
                activation: layer.activation,
            });
        }
        grads.reverse();
        Ok((MlpParams { layers: grads }, upstream))
    }
}

impl ParamSet for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }
}
