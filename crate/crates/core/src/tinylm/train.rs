//! AdamW training on a tokenized corpus.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::Packed;
use super::{ModelConfig, TinyLm};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    /// Cosine decay ends at `lr * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 6000,
            batch_size: 64,
            lr: 3e-3,
            warmup_steps: 200,
            final_lr_fraction: 0.05,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: 1.0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1);
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let floor = self.lr * self.final_lr_fraction;
        floor + 0.5 * (self.lr - floor) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// (step, mean loss over the preceding logging window)
    pub loss_log: Vec<(usize, f64)>,
    pub final_loss: f64,
    /// Filled in by callers that evaluate detection prompts after training.
    pub det_accuracy: Option<f64>,
}

/// Step-wise trainer; owns the model and the optimizer state.
pub struct Trainer<T> {
    model: TinyLm<T>,
    cfg: TrainConfig,
    data: Vec<Vec<u32>>,
    m: Vec<T>,
    v: Vec<T>,
    grad: Vec<T>,
    step: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    window: (f64, usize),
    report: TrainReport,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: TinyLm<T>, data: Vec<Vec<u32>>, cfg: TrainConfig, seed: u64) -> Result<Self> {
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let c = model.config();
        Packed::new(&data).validate(c.vocab_size, c.max_seq_len)?;
        if data.iter().any(|s| s.len() < 2) {
            return Err(Error::SequenceTooShort(
                "training sequences need at least 2 tokens".into(),
            ));
        }
        let n = model.n_params();
        let order = (0..data.len()).collect();
        Ok(Trainer {
            model,
            cfg,
            data,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            grad: vec![T::zero(); n],
            step: 0,
            order,
            cursor: usize::MAX,
            rng: ChaCha8Rng::seed_from_u64(seed),
            window: (0.0, 0),
            report: TrainReport::default(),
        })
    }

    pub fn model(&self) -> &TinyLm<T> {
        &self.model
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.steps
    }

    fn next_batch(&mut self) -> Packed {
        let mut batch: Vec<&[u32]> = Vec::with_capacity(self.cfg.batch_size);
        while batch.len() < self.cfg.batch_size.min(self.data.len()) {
            if self.cursor >= self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(&self.data[self.order[self.cursor]]);
            self.cursor += 1;
        }
        Packed::new(&batch)
    }

    /// One optimizer step. Returns the batch loss.
    pub fn step(&mut self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::Config("empty training corpus".into()));
        }
        let packed = self.next_batch();
        self.grad.fill(T::zero());
        let loss = self.model.backward_into(&packed, &mut self.grad)?.as_f64();
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: self.step,
                loss,
            });
        }
        let c = &self.cfg;
        let mut scale = T::one();
        if c.grad_clip > 0.0 {
            let norm = self
                .grad
                .iter()
                .map(|g| g.as_f64().powi(2))
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    step: self.step,
                    loss: norm,
                });
            }
            if norm > c.grad_clip {
                scale = T::lit(c.grad_clip / norm);
            }
        }
        let t = (self.step + 1) as i32;
        let lr = T::lit(c.lr_at(self.step));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let eps = T::lit(c.eps);
        let wd = T::lit(c.weight_decay);
        let one = T::one();
        for (((p, g), m), v) in self
            .model
            .params_mut()
            .iter_mut()
            .zip(&self.grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let g = *g * scale;
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * (mh / (vh.sqrt() + eps) + wd * *p);
        }
        self.step += 1;
        self.window.0 += loss;
        self.window.1 += 1;
        self.report.final_loss = loss;
        self.report.steps = self.step;
        if self.cfg.log_every > 0 && self.step.is_multiple_of(self.cfg.log_every) {
            self.report
                .loss_log
                .push((self.step, self.window.0 / self.window.1 as f64));
            self.window = (0.0, 0);
        }
        Ok(loss)
    }

    /// Run up to `n` more steps without exceeding the configured budget.
    pub fn run(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            if self.is_done() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn finish(self) -> (TinyLm<T>, TrainReport) {
        (self.model, self.report)
    }
}

/// Train a freshly initialized model for `train.steps` steps.
pub fn train(
    corpus: &[Vec<u32>],
    config: ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<(TinyLm<f32>, TrainReport)> {
    let model = TinyLm::<f32>::init(config, seed)?;
    let mut trainer = Trainer::new(model, corpus.to_vec(), train.clone(), seed.wrapping_add(1))?;
    trainer.run(train.steps)?;
    Ok(trainer.finish())
}
