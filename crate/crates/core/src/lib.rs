//! Context-aware chart embeddings.
//!
//! A chart is described declaratively by a [`ChartFact`]. Its structure is
//! encoded as a grammar derivation, its wording as pooled word vectors, and
//! a small convolutional encoder maps both to a fixed-length vector. The
//! encoder is trained so that charts from the same multi-view visualization
//! land close together.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); training runs in
//! `f64`. The aliases below fix the scalar type for common use.

pub mod ablation;
pub mod alloc;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod fact;
pub mod gradcheck;
pub mod grammar;
pub mod import;
pub mod index;
pub mod loss;
pub mod manifest;
pub mod metrics;
mod nn;
pub mod optim;
pub mod pipeline;
pub mod scalar;
pub mod semantics;
pub mod train;

pub use corpus::{load_corpus, Corpus, LoadMode, MultiViewVis};
pub use encoder::{embed, encode_chart, ChartVector, EncodedChart, EncoderConfig, EncoderParams};
pub use fact::{parse_fact_json, serialize_fact, validate_fact, ChartFact};
pub use grammar::{decode_skeleton, derive_rules, encode_one_hot, RuleSequence, SchemaMatrix};
pub use index::{build_index, EmbeddingIndex, Scope};
pub use loss::{LossBreakdown, LossWeights};
pub use metrics::{compute_metrics, Gaps, MetricsReport};
pub use scalar::Scalar;
pub use semantics::{SemanticBlock, SemanticLayout, VectorStore};
pub use train::{train, HyperParams, TrainingSet};

pub type Params64 = EncoderParams<f64>;
pub type Params32 = EncoderParams<f32>;
pub type Chart64 = EncodedChart<f64>;
pub type Chart32 = EncodedChart<f32>;
pub type Vector64 = ChartVector<f64>;
pub type Vector32 = ChartVector<f32>;
pub type Store64 = VectorStore<f64>;
pub type Store32 = VectorStore<f32>;
pub type Index64 = EmbeddingIndex<f64>;
pub type Index32 = EmbeddingIndex<f32>;
