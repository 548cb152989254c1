use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{bce_with_logit, forward, loss_and_gradients, GruParams};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::features::WindowMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 {
            return Err(Error::invalid("hidden size must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("adam epsilon must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid("clip norm must be positive"));
            }
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, len: usize) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

/// Scores for every window, in order.
pub fn predict(params: &GruParams, windows: &WindowMatrix) -> Result<Vec<f64>> {
    windows
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| forward(params, row).map(|(s, _)| s))
        .collect()
}

/// Mean BCE and scores in one forward pass per window.
fn loss_and_scores(params: &GruParams, windows: &WindowMatrix) -> Result<(f64, Vec<f64>)> {
    let traces: Vec<(f64, f64)> = windows
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| forward(params, row).map(|(s, t)| (s, t.logit)))
        .collect::<Result<_>>()?;
    let loss = traces
        .iter()
        .zip(windows.labels())
        .map(|(&(_, logit), &y)| bce_with_logit(logit, y))
        .sum::<f64>()
        / windows.len() as f64;
    Ok((loss, traces.into_iter().map(|(s, _)| s).collect()))
}

/// Mini-batch Adam on binary cross-entropy against the window label means.
///
/// Shuffling is seeded from `cfg.seed`, and gradient reduction order is
/// fixed, so two runs with the same inputs produce identical histories.
pub fn train(
    params: GruParams,
    dataset: &WindowMatrix,
    validation: Option<&WindowMatrix>,
    cfg: &TrainConfig,
) -> Result<(GruParams, History)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut params = params;
    let mut history = History::default();
    let mut adam = Adam::new(cfg, params.values().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let labels = dataset.labels();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], f64)> = idx.iter().map(|&i| (dataset.row(i), labels[i])).collect();
            let (loss, mut grads) = loss_and_gradients(&params, &batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            if let Some(max) = cfg.clip_norm {
                let norm = grads.l2_norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            adam.step(params.values_mut(), grads.values());
            loss_sum += loss * idx.len() as f64;
        }
        let train_loss = loss_sum / dataset.len() as f64;
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }

        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_accuracy: None,
            val_auc: None,
        };
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            let (loss, scores) = loss_and_scores(&params, val)?;
            let report = evaluate(&scores, &val.truth(), 0.5)?;
            record.val_loss = Some(loss);
            record.val_accuracy = Some(report.accuracy);
            record.val_auc = report.auc;
        }
        history.epochs.push(record);
    }
    Ok((params, history))
}
