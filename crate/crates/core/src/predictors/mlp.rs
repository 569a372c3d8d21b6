//! Fully connected network with a linear output layer.
//!
//! Besides the usual forward pass and parameter backpropagation, the network
//! propagates exact input Jacobians and input Hessians forward through the
//! layers (nested forward-mode differentiation). For a hidden unit
//! `h = φ(z)`, `z = W a + b`:
//!
//! ```text
//! ∇z_k   = Σ_j W_kj ∇a_j
//! ∇²z_k  = Σ_j W_kj ∇²a_j
//! ∇h_k   = φ'(z_k) ∇z_k
//! ∇²h_k  = φ''(z_k) ∇z_k ∇z_kᵀ + φ'(z_k) ∇²z_k
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            // a.e. convention: the kink belongs to the flat piece
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    /// `(φ(z), φ'(z), φ''(z))`
    #[inline]
    pub fn derivatives(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
            Activation::Softplus => {
                let s = 1.0 / (1.0 + (-z).exp());
                (self.apply(z), s, s * (1.0 - s))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`, row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { weights: Matrix::zeros(n_out, n_in), bias: vec![0.0; n_out] }
    }

    fn affine(&self, a: &[f64]) -> Vec<f64> {
        self.bias
            .iter()
            .enumerate()
            .map(|(k, b)| b + crate::numkit::dot(self.weights.row(k), a))
            .collect()
    }
}

/// Serialized layout shared by predictor and score checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// One row-major `out × in` array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(rec: MlpRecord) -> Result<Self> {
        let n = rec.layer_sizes.len();
        if n < 2 || rec.weights.len() != n - 1 || rec.biases.len() != n - 1 {
            return Err(Error::Serialization("inconsistent layer count".into()));
        }
        let mut layers = Vec::with_capacity(n - 1);
        for (l, (w, b)) in rec.weights.into_iter().zip(rec.biases).enumerate() {
            let (n_in, n_out) = (rec.layer_sizes[l], rec.layer_sizes[l + 1]);
            if w.len() != n_in * n_out || b.len() != n_out {
                return Err(Error::Serialization(format!("layer {l} has wrong shape")));
            }
            layers.push(Layer { weights: Matrix { rows: n_out, cols: n_in, data: w }, bias: b });
        }
        Ok(Mlp { layers, activation: rec.activation })
    }
}

impl From<Mlp> for MlpRecord {
    fn from(m: Mlp) -> Self {
        MlpRecord {
            layer_sizes: m.layer_sizes(),
            activation: m.activation,
            biases: m.layers.iter().map(|l| l.bias.clone()).collect(),
            weights: m.layers.into_iter().map(|l| l.weights.data).collect(),
        }
    }
}

/// Intermediate values kept for backpropagation.
pub struct ForwardCache {
    /// Layer inputs; `inputs[0]` is x.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Exact input derivatives of every output unit.
#[derive(Debug, Clone)]
pub struct InputDerivatives {
    pub value: Vec<f64>,
    /// `out × d`
    pub jacobian: Matrix,
    /// One `d × d` Hessian per output unit, when requested.
    pub hessians: Option<Vec<Matrix>>,
}

impl Mlp {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive, at least two".into()));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                let mut layer = Layer::zeros(n_in, n_out);
                for v in layer.weights.data.iter_mut() {
                    *v = (2.0 * rng.uniform() - 1.0) * limit;
                }
                layer
            })
            .collect();
        Ok(Mlp { layers, activation })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weights.rows != pair[1].weights.cols {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].weights.rows,
                    got: pair[1].weights.cols,
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.weights.rows {
                return Err(Error::LengthMismatch { left: l.weights.rows, right: l.bias.len() });
            }
        }
        Ok(Mlp { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.rows)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.weights.rows)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&a);
            if l < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            inputs.push(a);
            a = if l < last { z.iter().map(|v| self.activation.apply(*v)).collect() } else { z.clone() };
            pre.push(z);
        }
        Ok(ForwardCache { inputs, pre, output: a })
    }

    /// Reverse pass for `grad_out = ∂loss/∂output`. Accumulates parameter
    /// gradients into `grads` (when given) and returns `∂loss/∂x`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], mut grads: Option<&mut Mlp>) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l < last {
                for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                    *d *= self.activation.derivatives(*z).1;
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[l];
                let input = &cache.inputs[l];
                for (k, dk) in delta.iter().enumerate() {
                    gl.bias[k] += dk;
                    let row = &mut gl.weights.data[k * input.len()..(k + 1) * input.len()];
                    for (w, a) in row.iter_mut().zip(input) {
                        *w += dk * a;
                    }
                }
            }
            let n_in = layer.weights.cols;
            let mut next = vec![0.0; n_in];
            for (k, dk) in delta.iter().enumerate() {
                for (n, w) in next.iter_mut().zip(layer.weights.row(k)) {
                    *n += dk * w;
                }
            }
            delta = next;
        }
        delta
    }

    /// Forward-mode input Jacobian, and the per-output input Hessians when
    /// `with_hessian` is set.
    pub fn input_derivatives(&self, x: &[f64], with_hessian: bool) -> Result<InputDerivatives> {
        self.check_input(x)?;
        let d = x.len();
        let dd = d * d;
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        // row j holds ∇a_j
        let mut jac = Matrix::identity(d);
        // flat, unit-major: unit j occupies [j*dd, (j+1)*dd)
        let mut hess: Vec<f64> = if with_hessian { vec![0.0; d * dd] } else { Vec::new() };
        let mut input_is_x = true;

        for (l, layer) in self.layers.iter().enumerate() {
            let n_out = layer.weights.rows;
            let z = layer.affine(&a);
            let mut jz = Matrix::zeros(n_out, d);
            let mut hz = if with_hessian { vec![0.0; n_out * dd] } else { Vec::new() };
            for k in 0..n_out {
                let wrow = layer.weights.row(k);
                let jrow = &mut jz.data[k * d..(k + 1) * d];
                for (j, w) in wrow.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    for (o, v) in jrow.iter_mut().zip(jac.row(j)) {
                        *o += w * v;
                    }
                    // Hessian of the raw input is zero
                    if with_hessian && !input_is_x {
                        let hrow = &mut hz[k * dd..(k + 1) * dd];
                        for (o, v) in hrow.iter_mut().zip(&hess[j * dd..(j + 1) * dd]) {
                            *o += w * v;
                        }
                    }
                }
            }
            if l < last {
                let mut h_out = z.clone();
                for k in 0..n_out {
                    let (v, d1, d2) = self.activation.derivatives(z[k]);
                    h_out[k] = v;
                    if with_hessian {
                        let gk: Vec<f64> = jz.row(k).to_vec();
                        let hrow = &mut hz[k * dd..(k + 1) * dd];
                        for (i, gi) in gk.iter().enumerate() {
                            for (j, gj) in gk.iter().enumerate() {
                                let h = &mut hrow[i * d + j];
                                *h = d1 * *h + d2 * gi * gj;
                            }
                        }
                    }
                    jz.data[k * d..(k + 1) * d].iter_mut().for_each(|g| *g *= d1);
                }
                a = h_out;
            } else {
                a = z;
            }
            jac = jz;
            hess = hz;
            input_is_x = false;
        }

        let hessians = with_hessian.then(|| {
            hess.chunks(dd).map(|c| Matrix { rows: d, cols: d, data: c.to_vec() }).collect()
        });
        Ok(InputDerivatives { value: a, jacobian: jac, hessians })
    }

    /// Zeroed network with the same shape, used as a gradient buffer.
    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(|l| Layer::zeros(l.weights.cols, l.weights.rows)).collect(),
            activation: self.activation,
        }
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.data.iter().chain(l.bias.iter()))
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.data.iter_mut().chain(l.bias.iter_mut()))
    }
}
