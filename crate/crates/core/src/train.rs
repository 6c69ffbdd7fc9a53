//! Multi-task training over four-chart samples with shared encoder weights.

use crate::encoder::{
    backward, forward_batch, update_running_stats, EncodedChart, EncoderConfig, EncoderError, EncoderParams,
    ForwardMode, ForwardTrace,
};
use crate::loss::{quadruple_loss, LossBreakdown, LossWeights};
use crate::optim::{adam_step, AdamState};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub loss: LossWeights,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            loss: LossWeights::default(),
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 10,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidHyperParams(m.to_string()));
        let l = &self.loss;
        if !(l.alpha >= 0.0 && l.beta >= 0.0) {
            return bad("alpha and beta must be non-negative");
        }
        if !(l.margin > 0.0) {
            return bad("margin must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("training set is empty")]
    EmptySet,
    #[error("sample {sample} references chart {index}, but only {charts} charts are encoded")]
    BadSample { sample: usize, index: usize, charts: usize },
    #[error("loss diverged at epoch {epoch}, step {step}: {breakdown:?}")]
    Divergence {
        epoch: usize,
        step: usize,
        breakdown: LossBreakdown,
    },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Encoded charts plus `[prev, mid, next, negative]` index quadruples into them.
#[derive(Clone, Debug)]
pub struct TrainingSet<T> {
    pub charts: Vec<EncodedChart<T>>,
    pub samples: Vec<[usize; 4]>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.samples.is_empty() {
            return Err(TrainError::EmptySet);
        }
        for (s, quad) in self.samples.iter().enumerate() {
            if let Some(&index) = quad.iter().find(|&&i| i >= self.charts.len()) {
                return Err(TrainError::BadSample {
                    sample: s,
                    index,
                    charts: self.charts.len(),
                });
            }
        }
        Ok(())
    }
}

/// Result of embedding one batch in train mode.
pub struct BatchPass<T> {
    pub breakdown: LossBreakdown,
    pub trace: ForwardTrace<T>,
    /// Loss gradient for each of the `4 × batch` outputs.
    pub d_outputs: Vec<Vec<T>>,
}

/// Embeds every chart of the selected samples in one train-mode pass
/// (`prev, mid, next, neg` per sample, in sample order) and evaluates the
/// summed loss.
pub fn combined_loss<T: Scalar>(
    set: &TrainingSet<T>,
    batch: &[usize],
    params: &EncoderParams<T>,
    weights: &LossWeights,
    dropout: Option<&mut dyn RngCore>,
) -> Result<BatchPass<T>, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let charts: Vec<&EncodedChart<T>> = batch
        .iter()
        .flat_map(|&s| set.samples[s].iter().map(|&i| &set.charts[i]))
        .collect();
    let (outputs, trace) = forward_batch(&charts, params, ForwardMode::Train { dropout })?;
    let trace = trace.expect("train mode records a trace");
    let mut breakdown = LossBreakdown::default();
    let mut d_outputs = Vec::with_capacity(outputs.len());
    for quad in outputs.chunks(4) {
        let (b, grads) = quadruple_loss([&quad[0], &quad[1], &quad[2], &quad[3]], weights);
        breakdown.add(&b);
        d_outputs.extend(grads);
    }
    Ok(BatchPass {
        breakdown,
        trace,
        d_outputs,
    })
}

/// Loss and exact parameter gradients of one batch, dropout off unless a
/// generator is supplied.
pub fn batch_gradients<T: Scalar>(
    set: &TrainingSet<T>,
    batch: &[usize],
    params: &EncoderParams<T>,
    weights: &LossWeights,
    dropout: Option<&mut dyn RngCore>,
) -> Result<(LossBreakdown, EncoderParams<T>, ForwardTrace<T>), TrainError> {
    let pass = combined_loss(set, batch, params, weights, dropout)?;
    let grads = backward(&pass.trace, params, &pass.d_outputs)?;
    Ok((pass.breakdown, grads, pass.trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub wall_ms: u128,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: EncoderParams<T>,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

/// Independent generator streams derived from the run seed.
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Optimizer steps for `samples` samples: one per batch per epoch.
pub fn step_count(samples: usize, batch_size: usize, epochs: usize) -> usize {
    samples.div_ceil(batch_size) * epochs
}

/// Trains a freshly initialized encoder. Bitwise reproducible for a fixed
/// seed: initialization, shuffling and dropout each draw from their own
/// stream of that seed, and every reduction runs in a fixed order.
pub fn train<T: Scalar>(
    set: &TrainingSet<T>,
    config: &EncoderConfig,
    hyper: &HyperParams,
) -> Result<TrainOutcome<T>, TrainError> {
    let config = EncoderConfig {
        dropout: hyper.dropout,
        ..config.clone()
    };
    let params = EncoderParams::init(hyper.seed, &config)?;
    train_from(set, params, hyper)
}

/// Continues training from the given parameters.
pub fn train_from<T: Scalar>(
    set: &TrainingSet<T>,
    mut params: EncoderParams<T>,
    hyper: &HyperParams,
) -> Result<TrainOutcome<T>, TrainError> {
    hyper.validate()?;
    set.validate()?;
    let mut adam = AdamState::new(&params);
    let mut shuffle = stream(hyper.seed, SHUFFLE_STREAM);
    let mut dropout = stream(hyper.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..set.samples.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut steps = 0;
    for epoch in 1..=hyper.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle);
        let mut epoch_loss = LossBreakdown::default();
        for batch in order.chunks(hyper.batch_size) {
            let rng: Option<&mut dyn RngCore> = (params.config.dropout > 0.0).then_some(&mut dropout as _);
            let (breakdown, grads, trace) = batch_gradients(set, batch, &params, &hyper.loss, rng)?;
            if !breakdown.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    step: steps,
                    breakdown,
                });
            }
            adam_step(&mut params, &grads, &mut adam, hyper.learning_rate);
            update_running_stats(&mut params, &trace);
            epoch_loss.add(&breakdown);
            steps += 1;
        }
        history.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            wall_ms: started.elapsed().as_millis(),
        });
    }
    Ok(TrainOutcome { params, history, steps })
}

/// History as CSV: `epoch,interp_term,pair_term,l1,l2,total,wall_ms`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,interp_term,pair_term,l1,l2,total,wall_ms\n");
    for r in history {
        let l = &r.loss;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, l.interp_term, l.pair_term, l.l1, l.l2, l.total, r.wall_ms
        ));
    }
    out
}
