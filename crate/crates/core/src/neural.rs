//! A small feed-forward network that learns the inverse map from observed
//! link flows back to origin–destination demand.
//!
//! One hidden layer, ReLU on both layers (the output ReLU keeps demand
//! predictions non-negative), inverted dropout on the hidden layer, L1
//! weight regularization, Adam updates. Everything is deterministic given
//! the training seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("layer shapes disagree: {0}")]
    ShapeMismatch(String),
    #[error("{what} must be {bound}, got {value}")]
    InvalidParam {
        what: &'static str,
        bound: &'static str,
        value: f64,
    },
    #[error("dataset has no {0} samples")]
    EmptySplit(&'static str),
    #[error("dataset row {row}: {msg}")]
    BadSample { row: usize, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input → hidden → output network with ReLU activations on both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NNModel {
    /// Hidden weights, `hidden_size × input_size`.
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// Output weights, `output_size × hidden_size`.
    pub w2: Mat,
    pub b2: Vec<f64>,
    /// Hidden-unit drop probability used during training.
    pub dropout_rate: f64,
    /// L1 penalty coefficient on both weight matrices (never on biases).
    pub l1_lambda: f64,
}

/// Intermediate activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Vec<f64>,
    pub z1: Vec<f64>,
    /// Hidden activations after ReLU and (in training) inverted dropout;
    /// exactly what the output layer consumed.
    pub h: Vec<f64>,
    /// Per-unit dropout multiplier: 0 or 1/(1−p); all ones outside training.
    pub drop_scale: Vec<f64>,
    pub z2: Vec<f64>,
    pub y: Vec<f64>,
}

/// Gradients of the batch loss with respect to every parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl NNModel {
    pub fn input_size(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_size(&self) -> usize {
        self.w2.rows()
    }

    fn validate_shapes(&self) -> Result<(), NeuralError> {
        if self.b1.len() != self.hidden_size() {
            return Err(NeuralError::ShapeMismatch(format!(
                "b1 has {} entries for {} hidden units",
                self.b1.len(),
                self.hidden_size()
            )));
        }
        if self.w2.cols() != self.hidden_size() {
            return Err(NeuralError::ShapeMismatch(format!(
                "w2 has {} columns for {} hidden units",
                self.w2.cols(),
                self.hidden_size()
            )));
        }
        if self.b2.len() != self.output_size() {
            return Err(NeuralError::ShapeMismatch(format!(
                "b2 has {} entries for {} outputs",
                self.b2.len(),
                self.output_size()
            )));
        }
        Ok(())
    }

    /// Inference pass: dropout is a no-op.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x, None).y
    }

    /// Forward pass. With `dropout_rng` set, hidden units are dropped with
    /// probability `dropout_rate` and survivors are scaled by 1/(1−p), so
    /// the expected activation matches inference.
    pub fn forward(&self, x: &[f64], dropout_rng: Option<&mut ChaCha8Rng>) -> ForwardCache {
        assert_eq!(x.len(), self.input_size(), "input width");
        let mut z1 = self.w1.matvec(x);
        for (z, b) in z1.iter_mut().zip(&self.b1) {
            *z += b;
        }
        let mut drop_scale = vec![1.0; z1.len()];
        if let Some(rng) = dropout_rng {
            if self.dropout_rate > 0.0 {
                let keep = 1.0 - self.dropout_rate;
                for s in drop_scale.iter_mut() {
                    *s = if rng.random_range(0.0..1.0) < self.dropout_rate {
                        0.0
                    } else {
                        1.0 / keep
                    };
                }
            }
        }
        let h: Vec<f64> = z1
            .iter()
            .zip(&drop_scale)
            .map(|(&z, &s)| z.max(0.0) * s)
            .collect();
        let mut z2 = self.w2.matvec(&h);
        for (z, b) in z2.iter_mut().zip(&self.b2) {
            *z += b;
        }
        let y: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();
        ForwardCache {
            x: x.to_vec(),
            z1,
            h,
            drop_scale,
            z2,
            y,
        }
    }

    /// Batch loss given already-computed predictions: mean squared error
    /// over all samples and output elements, plus the L1 weight penalty.
    pub fn loss(&self, predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
        mse_loss(predictions, targets) + self.l1_penalty()
    }

    pub fn l1_penalty(&self) -> f64 {
        let sum: f64 = self
            .w1
            .data()
            .iter()
            .chain(self.w2.data())
            .map(|w| w.abs())
            .sum();
        self.l1_lambda * sum
    }

    /// Batch gradients of `loss` from the caches of a forward pass over the
    /// batch. ReLU uses the z > 0 subgradient; |w| uses sign with
    /// sign(0) = 0.
    pub fn backward(&self, caches: &[ForwardCache], targets: &[Vec<f64>]) -> Gradients {
        assert_eq!(caches.len(), targets.len(), "batch alignment");
        assert!(!caches.is_empty(), "backward needs at least one sample");
        let n_in = self.input_size();
        let n_hidden = self.hidden_size();
        let n_out = self.output_size();
        let mut g = Gradients {
            w1: Mat::zeros(n_hidden, n_in),
            b1: vec![0.0; n_hidden],
            w2: Mat::zeros(n_out, n_hidden),
            b2: vec![0.0; n_out],
        };
        // Mean over samples and elements mirrors mse_loss.
        let scale = 2.0 / (caches.len() * n_out) as f64;
        for (cache, target) in caches.iter().zip(targets) {
            let mut dz2 = vec![0.0; n_out];
            for k in 0..n_out {
                if cache.z2[k] > 0.0 {
                    dz2[k] = scale * (cache.y[k] - target[k]);
                }
            }
            for k in 0..n_out {
                if dz2[k] == 0.0 {
                    continue;
                }
                for j in 0..n_hidden {
                    *g.w2.get_mut(k, j) += dz2[k] * cache.h[j];
                }
                g.b2[k] += dz2[k];
            }
            let dh = self.w2.matvec_t(&dz2);
            for j in 0..n_hidden {
                // Same dropout scaling as the forward pass; dropped units
                // pass no gradient.
                let dz1 = if cache.z1[j] > 0.0 {
                    dh[j] * cache.drop_scale[j]
                } else {
                    0.0
                };
                if dz1 == 0.0 {
                    continue;
                }
                for i in 0..n_in {
                    *g.w1.get_mut(j, i) += dz1 * cache.x[i];
                }
                g.b1[j] += dz1;
            }
        }
        for (gw, w) in g.w1.data_mut().iter_mut().zip(self.w1.data()) {
            *gw += self.l1_lambda * sign0(*w);
        }
        for (gw, w) in g.w2.data_mut().iter_mut().zip(self.w2.data()) {
            *gw += self.l1_lambda * sign0(*w);
        }
        g
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let file = CheckpointFile::from(self);
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NNModel, NeuralError> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        file.try_into()
    }
}

fn sign0(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean squared error over all samples and output elements.
pub fn mse_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    assert_eq!(predictions.len(), targets.len(), "batch alignment");
    assert!(!predictions.is_empty(), "mse of an empty batch");
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(targets) {
        assert_eq!(p.len(), t.len(), "sample width");
        for (a, b) in p.iter().zip(t) {
            total += (a - b) * (a - b);
        }
        count += p.len();
    }
    total / count as f64
}

/// Adam optimizer state for the four parameter blocks.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m_w1: Mat,
    v_w1: Mat,
    m_b1: Vec<f64>,
    v_b1: Vec<f64>,
    m_w2: Mat,
    v_w2: Mat,
    m_b2: Vec<f64>,
    v_b2: Vec<f64>,
}

impl AdamState {
    pub fn new(model: &NNModel, learning_rate: f64) -> AdamState {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_w1: Mat::zeros(model.w1.rows(), model.w1.cols()),
            v_w1: Mat::zeros(model.w1.rows(), model.w1.cols()),
            m_b1: vec![0.0; model.b1.len()],
            v_b1: vec![0.0; model.b1.len()],
            m_w2: Mat::zeros(model.w2.rows(), model.w2.cols()),
            v_w2: Mat::zeros(model.w2.rows(), model.w2.cols()),
            m_b2: vec![0.0; model.b2.len()],
            v_b2: vec![0.0; model.b2.len()],
        }
    }

    /// One Adam update with bias-corrected first and second moments.
    pub fn apply(&mut self, model: &mut NNModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step;
        let (lr, b1, b2, eps) = (self.learning_rate, self.beta1, self.beta2, self.epsilon);
        let corr1 = 1.0 - b1.powi(t as i32);
        let corr2 = 1.0 - b2.powi(t as i32);
        let update = |w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / corr1;
                let vhat = v[i] / corr2;
                w[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        };
        update(
            model.w1.data_mut(),
            grads.w1.data(),
            self.m_w1.data_mut(),
            self.v_w1.data_mut(),
        );
        update(&mut model.b1, &grads.b1, &mut self.m_b1, &mut self.v_b1);
        update(
            model.w2.data_mut(),
            grads.w2.data(),
            self.m_w2.data_mut(),
            self.v_w2.data_mut(),
        );
        update(&mut model.b2, &grads.b2, &mut self.m_b2, &mut self.v_b2);
    }
}

/// Flow/demand training corpus. Inputs and targets are row-per-sample;
/// `hours` carries each sample's hour-of-run for traceability; the index
/// vectors define the chronological split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub hours: Vec<u32>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.inputs.len() != self.targets.len() || self.inputs.len() != self.hours.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} inputs, {} targets, {} hours",
                self.inputs.len(),
                self.targets.len(),
                self.hours.len()
            )));
        }
        if self.train_indices.is_empty() {
            return Err(NeuralError::EmptySplit("training"));
        }
        let in_width = self.inputs.first().map(|r| r.len()).unwrap_or(0);
        let out_width = self.targets.first().map(|r| r.len()).unwrap_or(0);
        for (row, (x, t)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if x.len() != in_width || t.len() != out_width {
                return Err(NeuralError::BadSample {
                    row,
                    msg: format!(
                        "widths {}x{} differ from first row {}x{}",
                        x.len(),
                        t.len(),
                        in_width,
                        out_width
                    ),
                });
            }
            if let Some(bad) = x.iter().chain(t).find(|v| !v.is_finite()) {
                return Err(NeuralError::BadSample {
                    row,
                    msg: format!("non-finite value {bad}"),
                });
            }
        }
        for &i in self.train_indices.iter().chain(&self.test_indices) {
            if i >= self.inputs.len() {
                return Err(NeuralError::ShapeMismatch(format!(
                    "split index {i} out of range for {} samples",
                    self.inputs.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub l1_lambda: f64,
    /// Start the output bias at the per-entry mean of the training targets
    /// and the output weights at zero, so epoch zero already predicts the
    /// training mean and the output ReLU starts in its active region.
    pub warm_output_bias: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_size: 80,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 96,
            dropout_rate: 0.2,
            l1_lambda: 0.02,
            warm_output_bias: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NeuralError> {
        let check = |ok: bool, what: &'static str, bound: &'static str, value: f64| {
            if ok {
                Ok(())
            } else {
                Err(NeuralError::InvalidParam { what, bound, value })
            }
        };
        check(self.hidden_size > 0, "hidden_size", ">= 1", self.hidden_size as f64)?;
        check(
            self.learning_rate.is_finite() && self.learning_rate > 0.0,
            "learning_rate",
            "> 0",
            self.learning_rate,
        )?;
        check(self.epochs > 0, "epochs", ">= 1", self.epochs as f64)?;
        check(self.batch_size > 0, "batch_size", ">= 1", self.batch_size as f64)?;
        check(
            (0.0..1.0).contains(&self.dropout_rate),
            "dropout_rate",
            "in [0, 1)",
            self.dropout_rate,
        )?;
        check(
            self.l1_lambda.is_finite() && self.l1_lambda >= 0.0,
            "l1_lambda",
            ">= 0",
            self.l1_lambda,
        )?;
        Ok(())
    }
}

/// Loss trace from a training run. `epoch_losses[0]` is the pre-training
/// loss; one more entry per epoch, all computed over the training split
/// with dropout off.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// He-uniform initialization: U(±√(6/fan_in)), the usual choice for ReLU
/// layers.
fn he_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let bound = (6.0 / cols as f64).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for w in m.data_mut() {
        *w = rng.random_range(-bound..bound);
    }
    m
}

/// Trains a fresh model on the dataset's training split. Deterministic for
/// a fixed config: initialization, epoch shuffles, and dropout masks all
/// come from one seeded generator.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(NNModel, TrainReport), NeuralError> {
    config.validate()?;
    dataset.validate()?;
    let n_in = dataset.inputs[0].len();
    let n_out = dataset.targets[0].len();
    if n_in == 0 || n_out == 0 {
        return Err(NeuralError::ShapeMismatch(
            "samples must have at least one input and one output".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let w1 = he_uniform(config.hidden_size, n_in, &mut rng);
    let b1 = vec![0.0; config.hidden_size];
    let (w2, b2) = if config.warm_output_bias {
        let mut means = vec![0.0; n_out];
        for &i in &dataset.train_indices {
            for (m, t) in means.iter_mut().zip(&dataset.targets[i]) {
                *m += t;
            }
        }
        for m in means.iter_mut() {
            *m /= dataset.train_indices.len() as f64;
        }
        (Mat::zeros(n_out, config.hidden_size), means)
    } else {
        (
            he_uniform(n_out, config.hidden_size, &mut rng),
            vec![0.0; n_out],
        )
    };
    let mut model = NNModel {
        w1,
        b1,
        w2,
        b2,
        dropout_rate: config.dropout_rate,
        l1_lambda: config.l1_lambda,
    };
    model.validate_shapes()?;

    let mut adam = AdamState::new(&model, config.learning_rate);
    let train_targets: Vec<&Vec<f64>> = dataset
        .train_indices
        .iter()
        .map(|&i| &dataset.targets[i])
        .collect();
    let split_loss = |model: &NNModel| {
        let preds: Vec<Vec<f64>> = dataset
            .train_indices
            .iter()
            .map(|&i| model.predict(&dataset.inputs[i]))
            .collect();
        let targets: Vec<Vec<f64>> = train_targets.iter().map(|t| (*t).clone()).collect();
        model.loss(&preds, &targets)
    };

    let mut report = TrainReport {
        epoch_losses: vec![split_loss(&model)],
    };
    let mut order: Vec<usize> = dataset.train_indices.clone();
    for _ in 0..config.epochs {
        // Fisher–Yates shuffle for this epoch's batch order.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for batch in order.chunks(config.batch_size) {
            let mut caches = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                caches.push(model.forward(&dataset.inputs[i], Some(&mut rng)));
                targets.push(dataset.targets[i].clone());
            }
            let grads = model.backward(&caches, &targets);
            adam.apply(&mut model, &grads);
        }
        report.epoch_losses.push(split_loss(&model));
    }
    Ok((model, report))
}

/// Quality summary of a set of predictions against targets: mean squared
/// error over all entries, its square root, and the latter as a percentage
/// of the mean target (undefined when that mean is zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub mse: f64,
    pub rmse: f64,
    pub rrmse_percent: Option<f64>,
}

pub fn eval_predictions(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> EvalSummary {
    let mse = mse_loss(predictions, targets);
    let rmse = mse.sqrt();
    let mut total = 0.0;
    let mut count = 0usize;
    for t in targets {
        total += t.iter().sum::<f64>();
        count += t.len();
    }
    let mean = total / count as f64;
    let rrmse_percent = if mean == 0.0 { None } else { Some(rmse / mean * 100.0) };
    EvalSummary {
        mse,
        rmse,
        rrmse_percent,
    }
}

/// Runs the model over the given sample indices and summarizes the error.
pub fn evaluate_nn(model: &NNModel, dataset: &Dataset, indices: &[usize]) -> EvalSummary {
    let preds: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| model.predict(&dataset.inputs[i]))
        .collect();
    let targets: Vec<Vec<f64>> = indices.iter().map(|&i| dataset.targets[i].clone()).collect();
    eval_predictions(&preds, &targets)
}

/// On-disk model format: dimensions plus row-major weight data.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    dropout_rate: f64,
    l1_lambda: f64,
}

impl From<&NNModel> for CheckpointFile {
    fn from(m: &NNModel) -> Self {
        CheckpointFile {
            input_size: m.input_size(),
            hidden_size: m.hidden_size(),
            output_size: m.output_size(),
            w1: m.w1.data().to_vec(),
            b1: m.b1.clone(),
            w2: m.w2.data().to_vec(),
            b2: m.b2.clone(),
            dropout_rate: m.dropout_rate,
            l1_lambda: m.l1_lambda,
        }
    }
}

impl TryFrom<CheckpointFile> for NNModel {
    type Error = NeuralError;

    fn try_from(f: CheckpointFile) -> Result<NNModel, NeuralError> {
        let need = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(NeuralError::Checkpoint(format!(
                    "{name} holds {got} values, shape requires {want}"
                )))
            }
        };
        need("w1", f.w1.len(), f.hidden_size * f.input_size)?;
        need("b1", f.b1.len(), f.hidden_size)?;
        need("w2", f.w2.len(), f.output_size * f.hidden_size)?;
        need("b2", f.b2.len(), f.output_size)?;
        if f.input_size == 0 || f.hidden_size == 0 || f.output_size == 0 {
            return Err(NeuralError::Checkpoint("zero-sized layer".into()));
        }
        if !(0.0..1.0).contains(&f.dropout_rate) || !(f.l1_lambda >= 0.0) {
            return Err(NeuralError::Checkpoint(
                "dropout_rate must be in [0,1) and l1_lambda >= 0".into(),
            ));
        }
        let model = NNModel {
            w1: Mat::from_vec(f.hidden_size, f.input_size, f.w1),
            b1: f.b1,
            w2: Mat::from_vec(f.output_size, f.hidden_size, f.w2),
            b2: f.b2,
            dropout_rate: f.dropout_rate,
            l1_lambda: f.l1_lambda,
        };
        for v in model
            .w1
            .data()
            .iter()
            .chain(model.w2.data())
            .chain(&model.b1)
            .chain(&model.b2)
        {
            if !v.is_finite() {
                return Err(NeuralError::Checkpoint("non-finite parameter".into()));
            }
        }
        Ok(model)
    }
}
