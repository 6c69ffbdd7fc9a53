//! Split, sample, train and evaluate as one seeded workflow. The CLI
//! commands and the ablation harness both go through here, so a one-variant
//! ablation and a plain train-then-evaluate run compute the same numbers.

use crate::corpus::{build_samples, split_corpus, Corpus, CorpusError, NegativePolicy, SampleSet};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::index::{build_index, EmbeddingIndex, IndexError};
use crate::metrics::{compute_metrics, Gaps, MetricsError, MetricsReport};
use crate::scalar::Scalar;
use crate::semantics::VectorStore;
use crate::train::{train, HyperParams, TrainError, TrainOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub encoder: EncoderConfig,
    pub hyper: HyperParams,
    pub negatives_per_window: usize,
    pub same_dataset_first: bool,
    /// Share of visualizations held out for evaluation; `0` trains and
    /// evaluates on the whole corpus.
    pub test_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            encoder: EncoderConfig::default(),
            hyper: HyperParams::default(),
            negatives_per_window: 1,
            same_dataset_first: true,
            test_fraction: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn policy(&self) -> NegativePolicy {
        if self.same_dataset_first {
            NegativePolicy::SameDatasetFirst
        } else {
            NegativePolicy::Any
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Corpus,
    /// `None` when nothing was held out.
    pub test: Option<Corpus>,
}

impl Split {
    /// The held-out side, or the training corpus when nothing was held out.
    pub fn evaluation(&self) -> &Corpus {
        self.test.as_ref().unwrap_or(&self.train)
    }
}

pub fn split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<Split, CorpusError> {
    if test_fraction == 0.0 {
        return Ok(Split {
            train: corpus.clone(),
            test: None,
        });
    }
    let (train, test) = split_corpus(corpus, test_fraction, seed)?;
    Ok(Split {
        train,
        test: Some(test),
    })
}

#[derive(Clone, Debug)]
pub struct Fitted<T> {
    pub split: Split,
    pub samples: SampleSet,
    pub outcome: TrainOutcome<T>,
}

/// Splits `corpus`, builds samples from the training side and trains.
/// Every random choice derives from `config.hyper.seed`.
pub fn fit<T: Scalar>(
    corpus: &Corpus,
    store: &VectorStore<T>,
    config: &PipelineConfig,
) -> Result<Fitted<T>, PipelineError> {
    let seed = config.hyper.seed;
    let split = split(corpus, config.test_fraction, seed)?;
    let samples = build_samples(&split.train, config.negatives_per_window, config.policy(), seed)?;
    let set = samples.resolve(&split.train, store, &config.encoder.semantic)?;
    let outcome = train(&set, &config.encoder, &config.hyper)?;
    Ok(Fitted {
        split,
        samples,
        outcome,
    })
}

pub fn evaluate<T: Scalar>(
    corpus: &Corpus,
    store: &VectorStore<T>,
    params: &EncoderParams<T>,
    gaps: Gaps,
) -> Result<(EmbeddingIndex<T>, MetricsReport), PipelineError> {
    let index = build_index(corpus, store, params)?;
    let report = compute_metrics(&index, gaps)?;
    Ok((index, report))
}
