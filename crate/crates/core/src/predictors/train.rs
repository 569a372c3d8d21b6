use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::softmax::{softmax, Head, MlpPredictor};
use crate::error::{Error, Result};
use crate::numkit::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// Step-size schedule and batching shared by every training loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer_config().validate()
    }
}

/// Inputs with scalar targets (regression values or class indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpPredictor,
    /// Full-dataset loss before training, then after every epoch.
    pub loss_history: Vec<f64>,
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn apply_step(net: &mut Mlp, grads: &Mlp, scale: f64, lr: f64, opt: Optimizer, state: &mut OptimizerState) {
    state.t += 1;
    let g_iter = grads.params().map(|g| g * scale);
    match opt {
        Optimizer::Sgd => {
            for (p, g) in net.params_mut().zip(g_iter) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let c1 = 1.0 - beta1.powi(state.t);
            let c2 = 1.0 - beta2.powi(state.t);
            for (((p, g), m), v) in net.params_mut().zip(g_iter).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Minibatch first-order training loop shared by predictor and score training.
///
/// `sample_loss` runs forward/backward for one example, accumulating into the
/// gradient buffer and returning its loss. `epoch_loss` evaluates the
/// monitoring loss recorded in the history.
pub(crate) fn minimize(
    net: &mut Mlp,
    n: usize,
    cfg: &OptimizerConfig,
    rng: &mut Rng,
    mut sample_loss: impl FnMut(&Mlp, usize, &mut Rng, &mut Mlp) -> f64,
    mut epoch_loss: impl FnMut(&Mlp) -> f64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    let params = net.parameter_count();
    let mut state = OptimizerState { m: vec![0.0; params], v: vec![0.0; params], t: 0 };
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = vec![epoch_loss(net)];
    let mut grads = net.zeros_like();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            grads.params_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                sample_loss(net, i, rng, &mut grads);
            }
            apply_step(net, &grads, 1.0 / batch.len() as f64, cfg.learning_rate, cfg.optimizer, &mut state);
        }
        let loss = epoch_loss(net);
        if !loss.is_finite() || net.params().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        log::debug!("epoch {epoch}: loss {loss:.6e}");
        history.push(loss);
    }
    Ok(history)
}

fn example_loss(model: &MlpPredictor, z: &[f64], target: f64) -> (f64, Vec<f64>) {
    match model.head {
        Head::LinearScalar => {
            let r = z[0] - target;
            (r * r, vec![2.0 * r])
        }
        Head::Softmax { .. } => {
            let s = softmax(z);
            let y = target as usize;
            let mut g = s.clone();
            g[y] -= 1.0;
            (-s[y].max(1e-300).ln(), g)
        }
    }
}

/// Mean loss of a predictor over a dataset under its head's loss.
pub fn dataset_loss(model: &MlpPredictor, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        total += example_loss(model, &model.net.forward(x)?, *y).0;
    }
    Ok(total / data.len() as f64)
}

/// Trains a copy of `model`. Deterministic given `config.seed`.
pub fn train(model: &MlpPredictor, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    if data.inputs.len() != data.targets.len() {
        return Err(Error::LengthMismatch { left: data.inputs.len(), right: data.targets.len() });
    }
    let d = model.net.input_dim();
    if let Some(bad) = data.inputs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    match (model.head, config.loss) {
        (Head::LinearScalar, LossKind::Mse) => {}
        (Head::Softmax { classes, .. }, LossKind::CrossEntropy) => {
            if data.targets.iter().any(|t| t.fract() != 0.0 || *t < 0.0 || *t as usize >= classes) {
                return Err(Error::InvalidArgument("class targets must be integers in 0..K".into()));
            }
        }
        (h, l) => return Err(Error::InvalidArgument(format!("loss {l:?} does not match head {h:?}"))),
    }

    let mut rng = Rng::new(config.seed);
    let mut working = model.clone();
    let head_model = model.clone();
    let history = minimize(
        &mut working.net,
        data.len(),
        &config.optimizer_config(),
        &mut rng,
        |net, i, _, grads| {
            let cache = net.forward_cached(&data.inputs[i]).expect("dimension checked");
            let (loss, g) = example_loss(&head_model, &cache.output, data.targets[i]);
            net.backward(&cache, &g, Some(grads));
            loss
        },
        |net| {
            let probe = MlpPredictor { net: net.clone(), head: head_model.head };
            dataset_loss(&probe, data).unwrap_or(f64::NAN)
        },
    )?;
    Ok(TrainOutcome { model: working, loss_history: history })
}
