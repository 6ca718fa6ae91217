//! Deterministic fine-tuning harness for a toy next-token model.
//!
//! The model is deliberately minimal: a frozen quantized embedding table, a
//! single adapter layer on the hidden state, and a frozen quantized output
//! projection. Only the adapter factors `A` and `B` train. Context tokens
//! are mean-pooled into the hidden vector, so the learnable synthetic task
//! is single-token copying: predict the context token itself.
//!
//! Gradient accumulation pools raw per-example gradient sums and divides
//! once per optimizer step, which makes a run with micro-batches bitwise
//! identical to the same run with one large batch.

mod optimizer;
mod schedule;

pub use optimizer::{AdamHyper, MomentMode, OptimizerState};
pub use schedule::LrSchedule;

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{hash_quantized, AdapterError, LoraLayer};
use crate::quantize::{dequantize_matrix, quantize_matrix, QuantizedMatrix, QuantizeError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("token {token} out of vocabulary (size {vocab})")]
    OutOfVocab { token: u32, vocab: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("example has an empty context")]
    EmptyContext,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("step {step} outside schedule range 1..={total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("divergent step: non-finite gradient")]
    DivergentStep,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

/// One supervised example: context tokens and the token to predict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub context: Vec<u32>,
    pub target: u32,
}

/// Synthetic copy task: every example is a single-token context whose
/// target is that same token. Learnable by construction.
pub fn copy_task(examples: usize, vocab: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..examples)
        .map(|_| {
            let token = rand::Rng::random_range(&mut rng, 0..vocab as u32);
            Example {
                context: vec![token],
                target: token,
            }
        })
        .collect()
}

/// Training hyperparameters. Defaults mirror a realistic fine-tuning recipe
/// (batch 8 with 4 accumulation steps for an effective batch of 32, three
/// epochs, peak rate 2e-6 after 30 warmup steps, weight decay 0.01); the
/// peak rate is meant to be overridden for desk-scale toy runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub epochs: usize,
    pub lr_max: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Fraction of the dataset held out for validation at epoch boundaries.
    pub val_fraction: f64,
    /// Store optimizer moments as blockwise 8-bit vectors.
    pub eight_bit_state: bool,
    pub eight_bit_block_size: usize,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            grad_accum_steps: 4,
            epochs: 3,
            lr_max: 2e-6,
            warmup_steps: 30,
            weight_decay: 0.01,
            early_stop_patience: 2,
            seed: 0,
            val_fraction: 0.1,
            eight_bit_state: false,
            eight_bit_block_size: 64,
            adam: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.grad_accum_steps
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size, grad_accum_steps, and epochs must all be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(TrainError::InvalidConfig(format!(
                "val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.lr_max < 0.0 || self.weight_decay < 0.0 {
            return Err(TrainError::InvalidConfig(
                "lr_max and weight_decay must be nonnegative".into(),
            ));
        }
        if self.eight_bit_state && self.eight_bit_block_size == 0 {
            return Err(TrainError::InvalidConfig(
                "eight_bit_block_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Frozen quantized embedding and projection around one trainable adapter.
#[derive(Debug, Clone)]
pub struct ToyModel {
    embed: QuantizedMatrix,
    embed_dense: Array2<f64>,
    layer: LoraLayer,
    proj: QuantizedMatrix,
    proj_dense: Array2<f64>,
    vocab: usize,
    hidden: usize,
}

impl ToyModel {
    /// Random frozen tensors (entries ~ N(0, 1/sqrt(hidden)), quantized in
    /// blocks of 64) with freshly initialized adapters.
    pub fn new(vocab: usize, hidden: usize, rank: usize, seed: u64) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).expect("positive std");
        let mut sample = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
        };
        let embed = sample(vocab, hidden);
        let base = sample(hidden, hidden);
        let proj = sample(vocab, hidden);
        ToyModel::from_parts(embed, base, proj, rank, seed, 64)
    }

    /// Builds a model from explicit dense frozen tensors, quantizing each.
    pub fn from_parts(
        embed: Array2<f64>,
        base: Array2<f64>,
        proj: Array2<f64>,
        rank: usize,
        adapter_seed: u64,
        block_size: usize,
    ) -> Result<Self, TrainError> {
        let vocab = embed.nrows();
        let hidden = embed.ncols();
        if base.dim() != (hidden, hidden) {
            return Err(TrainError::ShapeMismatch(format!(
                "base must be {hidden}x{hidden}, got {:?}",
                base.dim()
            )));
        }
        if proj.dim() != (vocab, hidden) {
            return Err(TrainError::ShapeMismatch(format!(
                "projection must be {vocab}x{hidden}, got {:?}",
                proj.dim()
            )));
        }
        let embed_q = quantize_matrix(&embed, block_size)?;
        let base_q = quantize_matrix(&base, block_size)?;
        let proj_q = quantize_matrix(&proj, block_size)?;
        let embed_dense = dequantize_matrix(&embed_q);
        let proj_dense = dequantize_matrix(&proj_q);
        let layer = LoraLayer::with_init(base_q, rank, adapter_seed)?;
        Ok(ToyModel {
            embed: embed_q,
            embed_dense,
            layer,
            proj: proj_q,
            proj_dense,
            vocab,
            hidden,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layer(&self) -> &LoraLayer {
        &self.layer
    }

    /// The adapter factors are the only trainable state.
    pub fn layer_mut(&mut self) -> &mut LoraLayer {
        &mut self.layer
    }

    pub fn trainable_parameter_count(&self) -> u64 {
        self.layer.rank() as u64 * (self.layer.rows() as u64 + self.layer.cols() as u64)
    }

    /// Container hashes of every frozen tensor, in a fixed order.
    pub fn frozen_hashes(&self) -> Vec<(String, String)> {
        vec![
            ("embedding".into(), hash_quantized(&self.embed)),
            ("base".into(), self.layer.base_hash()),
            ("projection".into(), hash_quantized(&self.proj)),
        ]
    }

    /// Mean-pooled embedding of the context tokens.
    fn features(&self, context: &[u32]) -> Result<Array1<f64>, TrainError> {
        if context.is_empty() {
            return Err(TrainError::EmptyContext);
        }
        let mut x = Array1::zeros(self.hidden);
        for &token in context {
            if token as usize >= self.vocab {
                return Err(TrainError::OutOfVocab {
                    token,
                    vocab: self.vocab,
                });
            }
            x += &self.embed_dense.row(token as usize);
        }
        x /= context.len() as f64;
        Ok(x)
    }

    /// Cross-entropy of one example without touching gradients.
    fn example_loss(&self, example: &Example) -> Result<f64, TrainError> {
        if example.target as usize >= self.vocab {
            return Err(TrainError::OutOfVocab {
                token: example.target,
                vocab: self.vocab,
            });
        }
        let x = self.features(&example.context)?;
        let h = self
            .layer
            .forward(x.view())
            .map_err(TrainError::Adapter)?;
        let logits = self.proj_dense.dot(&h);
        Ok(log_sum_exp(&logits) - logits[example.target as usize])
    }

    /// Adds one example's loss and adapter gradients into the accumulators.
    fn accumulate_example(
        &self,
        example: &Example,
        acc_a: &mut Array2<f64>,
        acc_b: &mut Array2<f64>,
    ) -> Result<f64, TrainError> {
        if example.target as usize >= self.vocab {
            return Err(TrainError::OutOfVocab {
                token: example.target,
                vocab: self.vocab,
            });
        }
        let x = self.features(&example.context)?;
        let (a, b) = self.layer.factors();
        let u = b.dot(&x);
        let mut h = self.layer.base_dense().dot(&x);
        if self.layer.rank() > 0 {
            h += &a.dot(&u);
        }
        let logits = self.proj_dense.dot(&h);
        let lse = log_sum_exp(&logits);
        let loss = lse - logits[example.target as usize];

        // d loss / d logits = softmax(logits) - onehot(target)
        let mut dz = logits.mapv(|z| (z - lse).exp());
        dz[example.target as usize] -= 1.0;
        let dh = self.proj_dense.t().dot(&dz);
        let du = a.t().dot(&dh);
        let rank = self.layer.rank();
        for i in 0..self.hidden {
            let dhi = dh[i];
            for j in 0..rank {
                acc_a[[i, j]] += dhi * u[j];
            }
        }
        for i in 0..rank {
            let dui = du[i];
            for j in 0..self.hidden {
                acc_b[[i, j]] += dui * x[j];
            }
        }
        Ok(loss)
    }
}

fn log_sum_exp(z: &Array1<f64>) -> f64 {
    let zmax = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    zmax + z.mapv(|v| (v - zmax).exp()).sum().ln()
}

/// Mean cross-entropy over a batch, forward only.
pub fn batch_loss(model: &ToyModel, batch: &[Example]) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut sum = 0.0;
    for example in batch {
        sum += model.example_loss(example)?;
    }
    Ok(sum / batch.len() as f64)
}

/// Mean cross-entropy plus the gradients of the adapter factors.
///
/// Frozen tensors receive no gradient. The result is a pure function of the
/// model and batch.
pub fn loss_and_grads(
    model: &ToyModel,
    batch: &[Example],
) -> Result<(f64, Array2<f64>, Array2<f64>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let (a, b) = model.layer().factors();
    let mut acc_a = Array2::zeros(a.dim());
    let mut acc_b = Array2::zeros(b.dim());
    let mut loss_sum = 0.0;
    for example in batch {
        loss_sum += model.accumulate_example(example, &mut acc_a, &mut acc_b)?;
    }
    let inv = 1.0 / batch.len() as f64;
    acc_a *= inv;
    acc_b *= inv;
    Ok((loss_sum * inv, acc_a, acc_b))
}

/// Outcome of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss of each optimizer step's accumulated batch.
    pub step_losses: Vec<f64>,
    /// Learning rate used at each optimizer step.
    pub lr_trace: Vec<f64>,
    /// Validation loss at every epoch boundary; index 0 precedes training.
    pub val_losses: Vec<f64>,
    /// Dataset indices of the held-out validation slice.
    pub val_indices: Vec<usize>,
    /// Index into `val_losses` of the restored checkpoint.
    pub best_eval: usize,
    pub stopped_early: bool,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub total_steps: u64,
    /// Measured, not part of the deterministic report serialization.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

struct Snapshot {
    eval: usize,
    loss: f64,
    a: Array2<f64>,
    b: Array2<f64>,
}

/// Fine-tunes the adapter factors on `dataset`.
///
/// The dataset is shuffled once by the config seed and split into train and
/// validation slices; validation runs before training and after every
/// epoch. Gradients accumulate over `grad_accum_steps` micro-batches per
/// optimizer step. Training stops early once the validation loss has failed
/// to improve more than `early_stop_patience` consecutive evaluations, and
/// the best-validation factors are restored before returning.
pub fn train(
    model: &mut ToyModel,
    dataset: &[Example],
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    config.validate()?;
    let start = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let val_count = (dataset.len() as f64 * config.val_fraction).floor() as usize;
    let (train_idx, val_idx) = if val_count == 0 {
        // Dataset too small to hold anything out; validate on the training
        // slice itself.
        (indices.clone(), indices)
    } else {
        let cut = dataset.len() - val_count;
        (indices[..cut].to_vec(), indices[cut..].to_vec())
    };

    let micro_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let steps_per_epoch = micro_per_epoch.div_ceil(config.grad_accum_steps);
    let total_steps = (steps_per_epoch * config.epochs) as u64;
    let schedule = LrSchedule {
        lr_max: config.lr_max,
        warmup_steps: config.warmup_steps,
        total_steps,
    };

    let mode = if config.eight_bit_state {
        MomentMode::Quantized {
            block_size: config.eight_bit_block_size,
        }
    } else {
        MomentMode::Full
    };
    let (a_dim, b_dim) = {
        let (a, b) = model.layer().factors();
        (a.dim(), b.dim())
    };
    let mut opt = OptimizerState::new(
        &[a_dim.0 * a_dim.1, b_dim.0 * b_dim.1],
        config.adam,
        mode,
    );

    let loss_of = |model: &ToyModel, idx: &[usize]| -> Result<f64, TrainError> {
        let mut sum = 0.0;
        for &i in idx {
            sum += model.example_loss(&dataset[i])?;
        }
        Ok(sum / idx.len() as f64)
    };

    let initial_train_loss = loss_of(model, &train_idx)?;
    let mut val_losses = vec![loss_of(model, &val_idx)?];
    let snapshot_of = |model: &ToyModel, eval: usize, loss: f64| {
        let (a, b) = model.layer().factors();
        Snapshot {
            eval,
            loss,
            a: a.clone(),
            b: b.clone(),
        }
    };
    let mut best = snapshot_of(model, 0, val_losses[0]);
    let mut bad_evals = 0usize;
    let mut stopped_early = false;

    let mut step_losses = Vec::new();
    let mut lr_trace = Vec::new();
    let mut step = 0u64;
    let mut acc_a = Array2::zeros(a_dim);
    let mut acc_b = Array2::zeros(b_dim);

    'epochs: for _ in 0..config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);

        acc_a.fill(0.0);
        acc_b.fill(0.0);
        let mut loss_sum = 0.0;
        let mut examples = 0usize;
        let mut micros = 0usize;
        let chunk_count = order.chunks(config.batch_size).count();

        for (chunk_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            for &i in chunk {
                loss_sum += model.accumulate_example(&dataset[i], &mut acc_a, &mut acc_b)?;
            }
            examples += chunk.len();
            micros += 1;
            let flush = micros == config.grad_accum_steps || chunk_idx + 1 == chunk_count;
            if !flush {
                continue;
            }

            let inv = 1.0 / examples as f64;
            acc_a *= inv;
            acc_b *= inv;
            step += 1;
            let lr = schedule.lr_at(step)?;
            {
                let (a, b) = model.layer_mut().factors_mut();
                let mut params = [
                    a.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ];
                let grads = [
                    acc_a.as_slice().expect("standard layout"),
                    acc_b.as_slice().expect("standard layout"),
                ];
                opt.apply_step(&mut params, &grads, lr, config.weight_decay)?;
            }
            step_losses.push(loss_sum * inv);
            lr_trace.push(lr);

            acc_a.fill(0.0);
            acc_b.fill(0.0);
            loss_sum = 0.0;
            examples = 0;
            micros = 0;
        }

        let val = loss_of(model, &val_idx)?;
        val_losses.push(val);
        if val < best.loss {
            best = snapshot_of(model, val_losses.len() - 1, val);
            bad_evals = 0;
        } else {
            bad_evals += 1;
            if bad_evals > config.early_stop_patience {
                stopped_early = true;
                break 'epochs;
            }
        }
    }

    let final_val_loss = best.loss;
    let best_eval = best.eval;
    model
        .layer_mut()
        .set_factors(best.a, best.b)
        .map_err(TrainError::Adapter)?;
    let final_train_loss = loss_of(model, &train_idx)?;

    Ok(TrainReport {
        step_losses,
        lr_trace,
        val_losses,
        val_indices: val_idx,
        best_eval,
        stopped_early,
        initial_train_loss,
        final_train_loss,
        final_val_loss,
        total_steps,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
