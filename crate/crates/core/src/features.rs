//! Single-hidden-layer regression network used as a feature learner. It is
//! trained by gradient descent on squared error against the continuous
//! target; the hidden activations then feed the ordinal learners.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vector::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative in terms of the pre-activation `v` and output `a`.
    fn derivative(self, v: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Epochs without a validation MAE improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub activation: Activation,
    /// Mini-batch size; `None` is full-batch.
    pub batch_size: Option<usize>,
    /// Train the readout only.
    pub freeze_hidden: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            learning_rate: 0.001,
            patience: 100,
            max_epochs: 20_000,
            activation: Activation::Tanh,
            batch_size: None,
            freeze_hidden: false,
            seed: 0,
        }
    }
}

impl MlpConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidParameter("hidden width must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `out = w2 . act(W1 x + b1) + b2`, predicting `target_mean + target_scale * out`.
///
/// Flat parameter layout: `W1` row-major (`hidden x input_dim`), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    hidden: usize,
    activation: Activation,
    params: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
}

impl Mlp {
    pub fn param_count(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + 2 * hidden + 1
    }

    pub fn zeros(input_dim: usize, hidden: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden,
            activation,
            params: vec![0.0; Self::param_count(input_dim, hidden)],
            target_mean: 0.0,
            target_scale: 1.0,
        }
    }

    /// Uniform in `+-1/sqrt(fan_in)` per layer, biases included.
    pub fn random(input_dim: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(input_dim, hidden, activation);
        let a1 = 1.0 / (input_dim.max(1) as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let split = hidden * input_dim + hidden;
        for (i, p) in m.params.iter_mut().enumerate() {
            let a = if i < split { a1 } else { a2 };
            *p = rng.random_range(-a..=a);
        }
        m
    }

    pub fn from_params(
        input_dim: usize,
        hidden: usize,
        activation: Activation,
        params: Vec<f64>,
        target_mean: f64,
        target_scale: f64,
    ) -> Result<Self> {
        let mut m = Self::zeros(input_dim, hidden, activation);
        m.set_params(&params)?;
        if !(target_mean.is_finite() && target_scale.is_finite()) {
            return Err(Error::NonFinite("target scaling".into()));
        }
        m.target_mean = target_mean;
        m.target_scale = target_scale;
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), found: params.len() });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn w1_row(&self, j: usize) -> &[f64] {
        &self.params[j * self.input_dim..(j + 1) * self.input_dim]
    }

    fn b1(&self) -> &[f64] {
        let s = self.hidden * self.input_dim;
        &self.params[s..s + self.hidden]
    }

    fn w2(&self) -> &[f64] {
        let s = self.hidden * self.input_dim + self.hidden;
        &self.params[s..s + self.hidden]
    }

    fn b2(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        Ok(())
    }

    fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        self.b1().iter().enumerate().map(|(j, b)| dot(self.w1_row(j), x) + b).collect()
    }

    /// Hidden-layer activations, length `hidden`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.pre_activations(x).into_iter().map(|v| self.activation.apply(v)).collect())
    }

    /// The network output before target rescaling.
    pub fn output(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(self.w2(), &self.embed(x)?) + self.b2())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.target_mean + self.target_scale * self.output(x)?)
    }

    pub fn mean_absolute_error(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch { left: xs.len(), right: ys.len() });
        }
        if xs.is_empty() {
            return Err(Error::Empty);
        }
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            total += (self.predict(x)? - y).abs();
        }
        Ok(total / xs.len() as f64)
    }

    /// `(1/2n) sum (output(x) - t)^2` and its gradient in the flat layout.
    /// Targets are in output units, i.e. before target rescaling.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ts: &[f64]) -> Result<(f64, Vec<f64>)> {
        let idx: Vec<usize> = (0..xs.len()).collect();
        self.batch_loss_and_gradient(xs, ts, &idx)
    }

    fn batch_loss_and_gradient(&self, xs: &[Vec<f64>], ts: &[f64], idx: &[usize]) -> Result<(f64, Vec<f64>)> {
        if xs.len() != ts.len() {
            return Err(Error::LengthMismatch { left: xs.len(), right: ts.len() });
        }
        if idx.is_empty() {
            return Err(Error::Empty);
        }
        let (d, h) = (self.input_dim, self.hidden);
        let mut grad = vec![0.0; self.params.len()];
        let (gw1, rest) = grad.split_at_mut(h * d);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        let w2 = self.w2();
        let mut loss = 0.0;
        for &i in idx {
            let x = &xs[i];
            self.check_dim(x)?;
            let pre = self.pre_activations(x);
            let act: Vec<f64> = pre.iter().map(|&v| self.activation.apply(v)).collect();
            let e = dot(w2, &act) + self.b2() - ts[i];
            loss += 0.5 * e * e;
            gb2[0] += e;
            for j in 0..h {
                gw2[j] += e * act[j];
                let g = e * w2[j] * self.activation.derivative(pre[j], act[j]);
                gb1[j] += g;
                for (gw, xv) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gw += g * xv;
                }
            }
        }
        let n = idx.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    fn readout_start(&self) -> usize {
        self.hidden * self.input_dim + self.hidden
    }
}

#[derive(Debug, Clone)]
pub struct MlpFit {
    /// Parameters at the best validation MAE.
    pub model: Mlp,
    pub best_epoch: usize,
    pub best_validation_mae: f64,
    pub epochs_run: usize,
    /// Validation MAE after each epoch, epoch 0 being the initial network.
    pub validation_history: Vec<f64>,
    /// Training loss (standardized targets) measured before each epoch's update.
    pub loss_history: Vec<f64>,
}

fn standardization(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let sd = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Gradient descent with early stopping on validation MAE.
pub fn train_mlp(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    valid_x: &[Vec<f64>],
    valid_y: &[f64],
    config: &MlpConfig,
) -> Result<MlpFit> {
    config.validate()?;
    if train_x.is_empty() || valid_x.is_empty() {
        return Err(Error::Empty);
    }
    if train_x.len() != train_y.len() {
        return Err(Error::LengthMismatch { left: train_x.len(), right: train_y.len() });
    }
    let d = train_x[0].len();
    let mut model = Mlp::random(d, config.hidden, config.activation, config.seed);
    let (mean, scale) = standardization(train_y);
    model.target_mean = mean;
    model.target_scale = scale;
    let targets: Vec<f64> = train_y.iter().map(|y| (y - mean) / scale).collect();

    let mut best = model.clone();
    let mut best_mae = model.mean_absolute_error(valid_x, valid_y)?;
    let mut best_epoch = 0;
    let mut validation_history = vec![best_mae];
    let mut loss_history = Vec::new();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let batch = config.batch_size.unwrap_or(order.len()).min(order.len());
    let first_trained = if config.freeze_hidden { model.readout_start() } else { 0 };
    let mut epoch = 0;
    while epoch - best_epoch < config.patience && epoch < config.max_epochs {
        epoch += 1;
        if config.batch_size.is_some() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = model.batch_loss_and_gradient(train_x, &targets, chunk)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            for (p, g) in model.params[first_trained..].iter_mut().zip(&grad[first_trained..]) {
                *p -= config.learning_rate * g;
            }
            if model.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
        }
        loss_history.push(epoch_loss / order.len() as f64);
        let mae = model.mean_absolute_error(valid_x, valid_y)?;
        if !mae.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        validation_history.push(mae);
        if mae < best_mae {
            best_mae = mae;
            best_epoch = epoch;
            best = model.clone();
        }
    }
    Ok(MlpFit {
        model: best,
        best_epoch,
        best_validation_mae: best_mae,
        epochs_run: epoch,
        validation_history,
        loss_history,
    })
}
