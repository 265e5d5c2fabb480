//! Windowed two-layer perceptron used for both forecasting and
//! reconstruction.
//!
//! ```text
//! input (L·D) ──W1,b1──▶ ReLU (fcn_dim) ──W2,b2──▶ output (h·D)
//! ```
//!
//! Parameters live in one flat vector laid out as `[W1 | b1 | W2 | b2]`,
//! with both weight matrices row-major (one row per output unit).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Error, Result};
use crate::predictor::{ModelShape, Predictor};
use crate::telemetry::WindowedDataset;

/// Training and architecture settings. Defaults follow the detector's
/// fine-tuning table: 3 epochs, learning rate 0.02, batch 128, model and
/// FCN width 64.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictorConfig {
    pub seq_len: usize,
    pub horizon: usize,
    /// Carried for interface parity with wider models; the perceptron has
    /// no embedding layer and does not read it.
    pub model_dim: usize,
    pub fcn_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            seq_len: 16,
            horizon: 1,
            model_dim: 64,
            fcn_dim: 64,
            epochs: 3,
            learning_rate: 0.02,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("seq_len", self.seq_len),
            ("horizon", self.horizon),
            ("model_dim", self.model_dim),
            ("fcn_dim", self.fcn_dim),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(config(format!("{name} must be positive")));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(config(format!(
                "learning rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Total parameter count for `features` columns.
    pub fn parameter_count(&self, features: usize) -> usize {
        let input = self.seq_len * features;
        let output = self.horizon * features;
        (input * self.fcn_dim + self.fcn_dim) + (self.fcn_dim * output + output)
    }
}

/// Train/validation MSE after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLoss {
    pub train: f64,
    pub val: f64,
}

/// Perceptron weights plus the configuration and history that produced them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedPredictor {
    pub config: PredictorConfig,
    pub features: usize,
    pub weights: Vec<f64>,
    pub history: Vec<EpochLoss>,
}

struct Layout {
    input: usize,
    hidden: usize,
    output: usize,
}

impl Layout {
    fn w1(&self) -> core::ops::Range<usize> {
        0..self.input * self.hidden
    }
    fn b1(&self) -> core::ops::Range<usize> {
        let s = self.input * self.hidden;
        s..s + self.hidden
    }
    fn w2(&self) -> core::ops::Range<usize> {
        let s = self.b1().end;
        s..s + self.hidden * self.output
    }
    fn b2(&self) -> core::ops::Range<usize> {
        let s = self.w2().end;
        s..s + self.output
    }
}

/// Builds an untrained predictor with weights drawn from
/// `uniform(-s, s)`, `s = 1/sqrt(L·D)`.
pub fn init_predictor(config: PredictorConfig, features: usize) -> Result<TrainedPredictor> {
    config.validate()?;
    if features == 0 {
        return Err(Error::Config("feature count must be positive".into()));
    }
    let count = config.parameter_count(features);
    let scale = 1.0 / libm::sqrt((config.seq_len * features) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = (0..count).map(|_| rng.random_range(-scale..scale)).collect();
    Ok(TrainedPredictor {
        config,
        features,
        weights,
        history: Vec::new(),
    })
}

impl TrainedPredictor {
    /// Wraps existing weights, checking the count against the config.
    pub fn from_parts(
        config: PredictorConfig,
        features: usize,
        weights: Vec<f64>,
        history: Vec<EpochLoss>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_count(features);
        if weights.len() != expected {
            return Err(Error::Dimension(format!(
                "{} weights for a model with {expected} parameters",
                weights.len()
            )));
        }
        Ok(Self {
            config,
            features,
            weights,
            history,
        })
    }

    fn layout(&self) -> Layout {
        Layout {
            input: self.config.seq_len * self.features,
            hidden: self.config.fcn_dim,
            output: self.config.horizon * self.features,
        }
    }

    /// Post-ReLU hidden layer for one window.
    pub fn hidden_activations(&self, input: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.config.fcn_dim];
        self.hidden_into(input, &mut hidden);
        hidden
    }

    fn hidden_into(&self, input: &[f64], hidden: &mut [f64]) {
        let lay = self.layout();
        let w1 = &self.weights[lay.w1()];
        let b1 = &self.weights[lay.b1()];
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * lay.input..(j + 1) * lay.input];
            let z = b1[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            *h = if z > 0.0 { z } else { 0.0 };
        }
    }

    fn output_from_hidden(&self, hidden: &[f64], out: &mut [f64]) {
        let lay = self.layout();
        let w2 = &self.weights[lay.w2()];
        let b2 = &self.weights[lay.b2()];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w2[k * lay.hidden..(k + 1) * lay.hidden];
            *o = b2[k] + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>();
        }
    }

    /// Mean squared error over a batch of `(input, target)` pairs, and its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], &[f64])]) -> (f64, Vec<f64>) {
        let lay = self.layout();
        let mut grad = vec![0.0; self.weights.len()];
        let mut hidden = vec![0.0; lay.hidden];
        let mut out = vec![0.0; lay.output];
        let mut d_hidden = vec![0.0; lay.hidden];
        let denom = (batch.len() * lay.output) as f64;
        let mut loss = 0.0;
        let (w1r, b1r, w2r, b2r) = (lay.w1(), lay.b1(), lay.w2(), lay.b2());
        for &(input, target) in batch {
            self.hidden_into(input, &mut hidden);
            self.output_from_hidden(&hidden, &mut out);
            d_hidden.fill(0.0);
            for k in 0..lay.output {
                let err = out[k] - target[k];
                loss += err * err;
                let d_out = 2.0 * err / denom;
                grad[b2r.start + k] += d_out;
                let w2_row = w2r.start + k * lay.hidden;
                for j in 0..lay.hidden {
                    grad[w2_row + j] += d_out * hidden[j];
                    d_hidden[j] += d_out * self.weights[w2_row + j];
                }
            }
            for j in 0..lay.hidden {
                // ReLU subgradient is 0 at the kink.
                if hidden[j] <= 0.0 {
                    continue;
                }
                let dz = d_hidden[j];
                grad[b1r.start + j] += dz;
                let w1_row = w1r.start + j * lay.input;
                for (g, x) in grad[w1_row..w1_row + lay.input].iter_mut().zip(input) {
                    *g += dz * x;
                }
            }
        }
        (loss / denom, grad)
    }

    /// Mean squared error over a whole dataset.
    pub fn dataset_loss(&self, data: &WindowedDataset) -> Result<f64> {
        Ok(evaluate_forecast(self, data)?.mse)
    }
}

impl Predictor for TrainedPredictor {
    fn shape(&self) -> ModelShape {
        ModelShape {
            seq_len: self.config.seq_len,
            horizon: self.config.horizon,
            features: self.features,
        }
    }

    fn predict_into(&self, input: &[f64], out: &mut [f64]) {
        let mut hidden = vec![0.0; self.config.fcn_dim];
        self.hidden_into(input, &mut hidden);
        self.output_from_hidden(&hidden, out);
    }
}

/// Mini-batch gradient descent on MSE for `config.epochs` epochs.
///
/// Batch order is reshuffled each epoch from a stream seeded by the config
/// seed. Train and validation loss are measured over the full sets after
/// every epoch.
pub fn train(
    predictor: &TrainedPredictor,
    train_data: &WindowedDataset,
    val_data: &WindowedDataset,
) -> Result<TrainedPredictor> {
    let shape = predictor.shape();
    shape.check(train_data)?;
    shape.check(val_data)?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::Input("training and validation sets must be non-empty".into()));
    }
    let cfg = predictor.config;
    let mut model = predictor.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ee_d0fb_a7c4);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&[f64], &[f64])> = chunk
                .iter()
                .map(|&i| (train_data.input(i), train_data.target(i)))
                .collect();
            let (loss, grad) = model.loss_and_gradient(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b });
            }
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
        let train_loss = model.dataset_loss(train_data)?;
        let val_loss = model.dataset_loss(val_data)?;
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        model.history.push(EpochLoss {
            train: train_loss,
            val: val_loss,
        });
    }
    Ok(model)
}

/// Test-set error summary.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    /// `(mse, mae)` for each output row position.
    pub per_horizon: Vec<(f64, f64)>,
}

/// MSE and MAE averaged over every window, row and feature.
pub fn evaluate_forecast<P: Predictor + ?Sized>(predictor: &P, test: &WindowedDataset) -> Result<EvalReport> {
    let shape = predictor.shape();
    shape.check(test)?;
    if test.is_empty() {
        return Err(Error::Input("test set is empty".into()));
    }
    let d = shape.features;
    let mut sq = vec![0.0; shape.horizon];
    let mut abs = vec![0.0; shape.horizon];
    let mut out = vec![0.0; shape.output_len()];
    for i in 0..test.len() {
        predictor.predict_into(test.input(i), &mut out);
        for (k, (p, t)) in out.iter().zip(test.target(i)).enumerate() {
            let e = p - t;
            sq[k / d] += e * e;
            abs[k / d] += libm::fabs(e);
        }
    }
    let per_row = (test.len() * d) as f64;
    let per_horizon: Vec<(f64, f64)> = sq
        .iter()
        .zip(&abs)
        .map(|(s, a)| (s / per_row, a / per_row))
        .collect();
    let h = shape.horizon as f64;
    Ok(EvalReport {
        mse: sq.iter().sum::<f64>() / (per_row * h),
        mae: abs.iter().sum::<f64>() / (per_row * h),
        per_horizon,
    })
}

/// Central finite-difference step.
pub const GRADIENT_CHECK_DELTA: f64 = 1e-5;

/// Largest relative error between the analytic gradient and central
/// differences over up to `params` randomly chosen parameters.
pub fn gradient_check(predictor: &TrainedPredictor, sample: (&[f64], &[f64]), params: usize, seed: u64) -> f64 {
    gradient_check_with(predictor, sample, params, seed, |m, b| m.loss_and_gradient(b).1)
}

/// [`gradient_check`] against an arbitrary gradient function.
pub fn gradient_check_with<F>(
    predictor: &TrainedPredictor,
    sample: (&[f64], &[f64]),
    params: usize,
    seed: u64,
    gradient: F,
) -> f64
where
    F: Fn(&TrainedPredictor, &[(&[f64], &[f64])]) -> Vec<f64>,
{
    let batch = [sample];
    let analytic = gradient(predictor, &batch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = predictor.weights.len();
    let chosen = rand::seq::index::sample(&mut rng, n, params.min(n));
    let mut probe = predictor.clone();
    let mut worst = 0.0f64;
    for i in chosen {
        let w = predictor.weights[i];
        probe.weights[i] = w + GRADIENT_CHECK_DELTA;
        let up = probe.loss_and_gradient(&batch).0;
        probe.weights[i] = w - GRADIENT_CHECK_DELTA;
        let down = probe.loss_and_gradient(&batch).0;
        probe.weights[i] = w;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_DELTA);
        let scale = libm::fmax(libm::fabs(numeric), libm::fabs(analytic[i]));
        let err = if scale < 1e-10 {
            libm::fabs(numeric - analytic[i])
        } else {
            libm::fabs(numeric - analytic[i]) / scale
        };
        worst = worst.max(err);
    }
    worst
}
