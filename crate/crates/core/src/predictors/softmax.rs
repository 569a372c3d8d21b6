use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::Predictor;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Which softmax output feeds the scalar diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassSelection {
    /// Predicted class `argmax z(x)`, re-selected at every input.
    Argmax,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Head {
    LinearScalar,
    Softmax { classes: usize, selection: ClassSelection },
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `∂²σ_k / ∂z_i ∂z_j = σ_k[(δ_ki − σ_i)(δ_kj − σ_j) − δ_ij σ_i + σ_i σ_j]`
pub fn softmax_hessian(sigma: &[f64], k: usize) -> Matrix {
    let n = sigma.len();
    let mut h = Matrix::zeros(n, n);
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    for i in 0..n {
        for j in 0..n {
            let v = sigma[k]
                * ((delta(k, i) - sigma[i]) * (delta(k, j) - sigma[j]) - delta(i, j) * sigma[i]
                    + sigma[i] * sigma[j]);
            h.set(i, j, v);
        }
    }
    h
}

/// Feed-forward predictor: network backbone plus an output head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPredictor {
    pub net: Mlp,
    pub head: Head,
}

impl MlpPredictor {
    pub fn new(net: Mlp, head: Head) -> Result<Self> {
        let out = net.output_dim();
        match head {
            Head::LinearScalar if out != 1 => {
                Err(Error::InvalidArgument(format!("linear-scalar head needs 1 output, network has {out}")))
            }
            Head::Softmax { classes, selection } => {
                if classes != out || classes < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "softmax head with {classes} classes on a network with {out} outputs"
                    )));
                }
                if let ClassSelection::Fixed(k) = selection {
                    if k >= classes {
                        return Err(Error::InvalidArgument(format!("class {k} out of range")));
                    }
                }
                Ok(MlpPredictor { net, head })
            }
            _ => Ok(MlpPredictor { net, head }),
        }
    }

    pub fn with_selection(&self, selection: ClassSelection) -> Result<Self> {
        match self.head {
            Head::Softmax { classes, .. } => {
                MlpPredictor::new(self.net.clone(), Head::Softmax { classes, selection })
            }
            Head::LinearScalar => Err(Error::InvalidArgument("class selection needs a softmax head".into())),
        }
    }

    pub fn is_piecewise_affine(&self) -> bool {
        self.net.hidden_layers() == 0 || self.net.activation() == Activation::Relu
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(x)
    }

    fn selected(&self, z: &[f64]) -> usize {
        match self.head {
            Head::LinearScalar => 0,
            Head::Softmax { selection: ClassSelection::Fixed(k), .. } => k,
            Head::Softmax { selection: ClassSelection::Argmax, .. } => {
                let mut best = 0;
                for (i, v) in z.iter().enumerate() {
                    if *v > z[best] {
                        best = i;
                    }
                }
                best
            }
        }
    }

    pub fn selected_class(&self, x: &[f64]) -> Result<usize> {
        Ok(self.selected(&self.net.forward(x)?))
    }

    /// Gradient of the selected output w.r.t. the logits.
    fn head_gradient(&self, z: &[f64]) -> Vec<f64> {
        match self.head {
            Head::LinearScalar => vec![1.0],
            Head::Softmax { .. } => {
                let k = self.selected(z);
                let s = softmax(z);
                (0..s.len()).map(|i| s[k] * (if i == k { 1.0 } else { 0.0 } - s[i])).collect()
            }
        }
    }
}

impl Predictor for MlpPredictor {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let z = self.net.forward(x)?;
        Ok(match self.head {
            Head::LinearScalar => z[0],
            Head::Softmax { .. } => softmax(&z)[self.selected(&z)],
        })
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cache = self.net.forward_cached(x)?;
        let g = self.head_gradient(&cache.output);
        Ok(self.net.backward(&cache, &g, None))
    }

    fn hessian(&self, x: &[f64]) -> Result<Matrix> {
        let der = self.net.input_derivatives(x, true)?;
        let hz = der.hessians.expect("requested hessians");
        let d = x.len();
        match self.head {
            Head::LinearScalar => Ok(hz.into_iter().next().expect("one output")),
            Head::Softmax { .. } => {
                let k = self.selected(&der.value);
                let s = softmax(&der.value);
                let hs = softmax_hessian(&s, k);
                let gs = self.head_gradient(&der.value);
                let n = s.len();
                let mut h = Matrix::zeros(d, d);
                for i in 0..n {
                    let ji = der.jacobian.row(i);
                    for j in 0..n {
                        let c = hs.get(i, j);
                        if c == 0.0 {
                            continue;
                        }
                        let jj = der.jacobian.row(j);
                        for a in 0..d {
                            for b in 0..d {
                                h.data[a * d + b] += c * ji[a] * jj[b];
                            }
                        }
                    }
                    for (o, v) in h.data.iter_mut().zip(&hz[i].data) {
                        *o += gs[i] * v;
                    }
                }
                Ok(h)
            }
        }
    }

    fn laplacian_softmax_shortcut(&self, x: &[f64], top_k: Option<usize>) -> Result<f64> {
        let Head::Softmax { .. } = self.head else {
            return Err(Error::ShortcutRequiresPiecewiseAffine);
        };
        if !self.is_piecewise_affine() {
            return Err(Error::ShortcutRequiresPiecewiseAffine);
        }
        let der = self.net.input_derivatives(x, false)?;
        let z = &der.value;
        let k = self.selected(z);
        let s = softmax(z);
        let hs = softmax_hessian(&s, k);
        let mut idx: Vec<usize> = (0..z.len()).collect();
        if let Some(t) = top_k {
            idx.sort_by(|a, b| z[*b].total_cmp(&z[*a]));
            idx.truncate(t.max(1));
            if !idx.contains(&k) {
                idx.push(k);
            }
        }
        let mut total = 0.0;
        for &i in &idx {
            for &j in &idx {
                total += hs.get(i, j) * crate::numkit::dot(der.jacobian.row(i), der.jacobian.row(j));
            }
        }
        Ok(total)
    }

    fn id(&self) -> String {
        let sizes: Vec<String> = self.net.layer_sizes().iter().map(|s| s.to_string()).collect();
        let head = match self.head {
            Head::LinearScalar => "linear".to_string(),
            Head::Softmax { selection: ClassSelection::Argmax, .. } => "softmax-argmax".to_string(),
            Head::Softmax { selection: ClassSelection::Fixed(k), .. } => format!("softmax-class{k}"),
        };
        format!("mlp-{}-{}-{}", sizes.join("x"), self.net.activation().name(), head)
    }
}

/// JSON checkpoint layout for predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorCheckpoint {
    pub dimension: usize,
    #[serde(flatten)]
    pub network: Mlp,
    pub head: Head,
    #[serde(default)]
    pub training: Option<serde_json::Value>,
}

impl PredictorCheckpoint {
    pub fn new(model: &MlpPredictor, training: Option<serde_json::Value>) -> Self {
        PredictorCheckpoint {
            dimension: model.input_dim(),
            network: model.net.clone(),
            head: model.head,
            training,
        }
    }

    pub fn into_predictor(self) -> Result<MlpPredictor> {
        if self.dimension != self.network.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.dimension, got: self.network.input_dim() });
        }
        MlpPredictor::new(self.network, self.head)
    }
}
