//! The chart encoder.
//!
//! ```text
//! schema 16×60 ─ [conv k=3 → batch norm → ReLU] ×3 ─ flatten 128 ─┐
//!                                                                 ├─ concat 553 ─ fc1 ─ ReLU ─ dropout ─ fc2 ─ 540
//! semantics 25×17 ─────────────────────────────────── flatten 425 ┘
//! ```
//!
//! Infer mode normalizes with running statistics and is a pure function of
//! its inputs. Train mode normalizes with batch statistics, returns a
//! [`ForwardTrace`] for [`backward`], and never touches the running
//! statistics itself: the trainer applies them with [`update_running_stats`].

use crate::fact::ChartFact;
use crate::grammar::{derive_rules, encode_one_hot, GrammarError, SchemaMatrix, MAX_RULES, RULE_COUNT};
use crate::nn::{
    batch_norm_backward, batch_norm_infer, batch_norm_train, conv1d_backward, conv1d_forward, dense_backward,
    dense_forward, relu_backward_in_place, relu_in_place, BatchNormCache,
};
use crate::scalar::Scalar;
use crate::semantics::{build_semantic_block, extract_tokens, SemanticBlock, SemanticLayout, VectorStore};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Deref;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Channel plan of the schema convolutions; the first entry is the rule count.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub sequence_length: usize,
    pub semantic: SemanticLayout,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    /// Ablation switches. A disabled branch contributes zeros to the fusion vector.
    pub use_schema: bool,
    pub use_semantics: bool,
    /// Without the fully connected head the fusion vector is the output.
    pub use_fc: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            conv_channels: vec![RULE_COUNT, 30, 15, 8],
            kernel: 3,
            sequence_length: MAX_RULES,
            semantic: SemanticLayout::default(),
            hidden_dim: 540,
            output_dim: 540,
            dropout: 0.1,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
            use_schema: true,
            use_semantics: true,
            use_fc: true,
        }
    }
}

impl EncoderConfig {
    pub fn structural_dim(&self) -> usize {
        self.sequence_length * self.conv_channels.last().copied().unwrap_or(0)
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic.len()
    }

    /// Length of the concatenated structural and semantic features.
    pub fn fusion_dim(&self) -> usize {
        self.structural_dim() + self.semantic_dim()
    }

    /// Dimension of the chart vectors this configuration produces.
    pub fn embedding_dim(&self) -> usize {
        if self.use_fc {
            self.output_dim
        } else {
            self.fusion_dim()
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::Config(m.to_string()));
        if self.conv_channels.len() < 2 {
            return bad("at least one convolution layer is required");
        }
        if self.conv_channels[0] != RULE_COUNT {
            return bad("first convolution must take one channel per grammar rule");
        }
        if self.conv_channels.contains(&0) {
            return bad("channel counts must be positive");
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return bad("kernel size must be odd");
        }
        if self.sequence_length != MAX_RULES {
            return bad("sequence length must equal the schema matrix height");
        }
        if self.hidden_dim == 0 || self.output_dim == 0 {
            return bad("dense dimensions must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_epsilon <= 0.0 {
            return bad("invalid batch-norm settings");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in parameter tensor `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// A chart's network input: the one-hot schema and the semantic block.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedChart<T> {
    pub schema: SchemaMatrix,
    pub semantics: SemanticBlock<T>,
}

pub fn encode_chart<T: Scalar>(
    fact: &ChartFact,
    store: &VectorStore<T>,
    layout: &SemanticLayout,
) -> Result<EncodedChart<T>, GrammarError> {
    let schema = encode_one_hot(&derive_rules(fact)?)?;
    let semantics = build_semantic_block(&extract_tokens(fact), store, layout);
    Ok(EncodedChart { schema, semantics })
}

/// Output embedding of one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartVector<T>(pub Vec<T>);

impl<T> Deref for ChartVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out × in × kernel]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs × inputs]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Learned encoder state. The same shape doubles as a gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub conv: Vec<ConvLayer<T>>,
    pub fc1: Option<Dense<T>>,
    pub fc2: Option<Dense<T>>,
}

/// Borrowed view of one parameter tensor.
pub struct TensorRef<'a, T> {
    pub name: String,
    pub data: &'a [T],
    pub trainable: bool,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect()
}

impl<T: Scalar> EncoderParams<T> {
    /// All-zero tensors shaped by `config` (running variance included).
    pub fn zeros(config: &EncoderConfig) -> Self {
        let conv = config
            .conv_channels
            .windows(2)
            .map(|w| ConvLayer {
                in_channels: w[0],
                out_channels: w[1],
                kernel: config.kernel,
                weight: vec![T::zero(); w[1] * w[0] * config.kernel],
                bias: vec![T::zero(); w[1]],
                gamma: vec![T::zero(); w[1]],
                beta: vec![T::zero(); w[1]],
                running_mean: vec![T::zero(); w[1]],
                running_var: vec![T::zero(); w[1]],
            })
            .collect();
        let dense = |inputs, outputs| Dense {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        };
        EncoderParams {
            config: config.clone(),
            conv,
            fc1: config.use_fc.then(|| dense(config.fusion_dim(), config.hidden_dim)),
            fc2: config.use_fc.then(|| dense(config.hidden_dim, config.output_dim)),
        }
    }

    /// Fan-in scaled uniform initialization: weights in ±√(6/fan_in), biases
    /// in ±1/√fan_in; batch-norm scale 1, shift 0, running mean 0, running
    /// variance 1.
    pub fn init(seed: u64, config: &EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        for layer in &mut p.conv {
            let fan_in = (layer.in_channels * layer.kernel) as f64;
            layer.weight = uniform(&mut rng, layer.weight.len(), (6.0 / fan_in).sqrt());
            layer.bias = uniform(&mut rng, layer.bias.len(), 1.0 / fan_in.sqrt());
            layer.gamma.fill(T::one());
            layer.running_var.fill(T::one());
        }
        for d in [&mut p.fc1, &mut p.fc2].into_iter().flatten() {
            let fan_in = d.inputs as f64;
            d.weight = uniform(&mut rng, d.weight.len(), (6.0 / fan_in).sqrt());
            d.bias = uniform(&mut rng, d.bias.len(), 1.0 / fan_in.sqrt());
        }
        Ok(p)
    }

    /// Every tensor in checkpoint order: per convolution layer weight, bias,
    /// gamma, beta, running mean, running variance; then fc1 weight, fc1
    /// bias, fc2 weight, fc2 bias.
    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = Vec::new();
        for (l, c) in self.conv.iter().enumerate() {
            for (name, data, trainable) in [
                ("weight", &c.weight, true),
                ("bias", &c.bias, true),
                ("gamma", &c.gamma, true),
                ("beta", &c.beta, true),
                ("running_mean", &c.running_mean, false),
                ("running_var", &c.running_var, false),
            ] {
                out.push(TensorRef {
                    name: format!("conv{}.{name}", l + 1),
                    data,
                    trainable,
                });
            }
        }
        for (i, d) in [&self.fc1, &self.fc2].into_iter().enumerate() {
            if let Some(d) = d {
                out.push(TensorRef {
                    name: format!("fc{}.weight", i + 1),
                    data: &d.weight,
                    trainable: true,
                });
                out.push(TensorRef {
                    name: format!("fc{}.bias", i + 1),
                    data: &d.bias,
                    trainable: true,
                });
            }
        }
        out
    }

    /// Mutable tensors in the order of [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for c in &mut self.conv {
            out.extend([
                &mut c.weight,
                &mut c.bias,
                &mut c.gamma,
                &mut c.beta,
                &mut c.running_mean,
                &mut c.running_var,
            ]);
        }
        for d in [&mut self.fc1, &mut self.fc2].into_iter().flatten() {
            out.extend([&mut d.weight, &mut d.bias]);
        }
        out
    }

    pub fn trainable(&self) -> Vec<&[T]> {
        self.tensors()
            .into_iter()
            .filter(|t| t.trainable)
            .map(|t| t.data)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<T>> {
        let flags: Vec<bool> = self.tensors().iter().map(|t| t.trainable).collect();
        self.tensors_mut()
            .into_iter()
            .zip(flags)
            .filter_map(|(t, keep)| keep.then_some(t))
            .collect()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.tensors()
            .into_iter()
            .filter(|t| t.trainable)
            .map(|t| t.name)
            .collect()
    }

    /// Number of scalars across every tensor, running statistics included.
    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn check_finite(&self) -> Result<(), EncoderError> {
        for t in self.tensors() {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(EncoderError::NonFinite(t.name));
            }
        }
        Ok(())
    }

    fn check_input(&self, chart: &EncodedChart<T>) -> Result<(), EncoderError> {
        let expected = self.config.semantic_dim();
        if chart.semantics.data.len() != expected {
            return Err(EncoderError::Shape(format!(
                "semantic block has {} values, encoder expects {expected}",
                chart.semantics.data.len()
            )));
        }
        Ok(())
    }
}

/// Per-layer values cached by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct ConvTrace<T> {
    input: Vec<T>,
    norm: BatchNormCache<T>,
    /// Batch-norm output before ReLU.
    pre_activation: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    batch: usize,
    conv: Vec<ConvTrace<T>>,
    fusion: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
    dropout_mask: Option<Vec<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Batch mean and biased variance of each convolution layer.
    pub fn batch_statistics(&self) -> Vec<(&[T], &[T])> {
        self.conv.iter().map(|c| (&c.norm.mean[..], &c.norm.var[..])).collect()
    }
}

pub enum ForwardMode<'a> {
    Infer,
    /// Batch statistics; dropout is applied when a generator is given.
    Train {
        dropout: Option<&'a mut dyn RngCore>,
    },
}

/// Schema matrices as `[batch × 60 channels × 16 steps]`.
fn schema_channels<T: Scalar>(charts: &[&EncodedChart<T>], len: usize) -> Vec<T> {
    let mut x = vec![T::zero(); charts.len() * RULE_COUNT * len];
    for (n, c) in charts.iter().enumerate() {
        for t in 0..len {
            for (ch, &v) in c.schema.row(t).iter().enumerate() {
                if v != 0 {
                    x[(n * RULE_COUNT + ch) * len + t] = T::one();
                }
            }
        }
    }
    x
}

/// Runs the encoder over a batch of charts.
pub fn forward_batch<T: Scalar>(
    charts: &[&EncodedChart<T>],
    params: &EncoderParams<T>,
    mode: ForwardMode<'_>,
) -> Result<(Vec<ChartVector<T>>, Option<ForwardTrace<T>>), EncoderError> {
    let cfg = &params.config;
    params.check_finite()?;
    for c in charts {
        params.check_input(c)?;
    }
    let batch = charts.len();
    if batch == 0 {
        return Ok((Vec::new(), None));
    }
    let (train, mut dropout_rng) = match mode {
        ForwardMode::Infer => (false, None),
        ForwardMode::Train { dropout } => (true, dropout),
    };
    let len = cfg.sequence_length;
    let eps = T::lit(cfg.bn_epsilon);
    let mut conv_traces = Vec::new();

    let structural_dim = cfg.structural_dim();
    let fusion_dim = cfg.fusion_dim();
    let mut fusion = vec![T::zero(); batch * fusion_dim];

    if cfg.use_schema {
        let mut x = schema_channels(charts, len);
        for layer in &params.conv {
            let (ci, co) = (layer.in_channels, layer.out_channels);
            let z = conv1d_forward(&x, batch, ci, co, len, layer.kernel, &layer.weight, &layer.bias);
            let (mut y, cache) = if train {
                let (y, cache) = batch_norm_train(&z, batch, co, len, &layer.gamma, &layer.beta, eps);
                (y, Some(cache))
            } else {
                let y = batch_norm_infer(
                    &z,
                    batch,
                    co,
                    len,
                    &layer.gamma,
                    &layer.beta,
                    &layer.running_mean,
                    &layer.running_var,
                    eps,
                );
                (y, None)
            };
            let pre = train.then(|| y.clone());
            relu_in_place(&mut y);
            if let Some(norm) = cache {
                conv_traces.push(ConvTrace {
                    input: std::mem::take(&mut x),
                    norm,
                    pre_activation: pre.unwrap(),
                });
            }
            x = y;
        }
        for n in 0..batch {
            fusion[n * fusion_dim..n * fusion_dim + structural_dim]
                .copy_from_slice(&x[n * structural_dim..(n + 1) * structural_dim]);
        }
    }
    if cfg.use_semantics {
        for (n, c) in charts.iter().enumerate() {
            fusion[n * fusion_dim + structural_dim..(n + 1) * fusion_dim].copy_from_slice(&c.semantics.data);
        }
    }

    let (outputs, hidden_pre, hidden, mask) = match (&params.fc1, &params.fc2) {
        (Some(fc1), Some(fc2)) => {
            let hidden_pre = dense_forward(&fusion, batch, fc1.inputs, fc1.outputs, &fc1.weight, &fc1.bias);
            let mut hidden = hidden_pre.clone();
            relu_in_place(&mut hidden);
            let mut mask = None;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                if cfg.dropout > 0.0 {
                    let keep = 1.0 - cfg.dropout;
                    let scale = T::lit(1.0 / keep);
                    let m: Vec<T> = (0..hidden.len())
                        .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                        .collect();
                    for (h, s) in hidden.iter_mut().zip(&m) {
                        *h *= *s;
                    }
                    mask = Some(m);
                }
            }
            let out = dense_forward(&hidden, batch, fc2.inputs, fc2.outputs, &fc2.weight, &fc2.bias);
            (out, hidden_pre, hidden, mask)
        }
        _ => (fusion.clone(), Vec::new(), Vec::new(), None),
    };

    let dim = cfg.embedding_dim();
    let vectors = outputs.chunks(dim).map(|c| ChartVector(c.to_vec())).collect();
    let trace = train.then(|| ForwardTrace {
        batch,
        conv: conv_traces,
        fusion,
        hidden_pre,
        hidden,
        dropout_mask: mask,
    });
    Ok((vectors, trace))
}

/// Infer-mode embedding of a single chart.
pub fn embed<T: Scalar>(chart: &EncodedChart<T>, params: &EncoderParams<T>) -> Result<ChartVector<T>, EncoderError> {
    let (mut v, _) = forward_batch(&[chart], params, ForwardMode::Infer)?;
    Ok(v.pop().expect("one chart in, one vector out"))
}

/// Gradients of every trainable tensor given the loss gradient with respect
/// to each output vector. Running-statistic slots of the result stay zero.
pub fn backward<T: Scalar>(
    trace: &ForwardTrace<T>,
    params: &EncoderParams<T>,
    d_outputs: &[Vec<T>],
) -> Result<EncoderParams<T>, EncoderError> {
    let cfg = &params.config;
    let batch = trace.batch;
    if d_outputs.len() != batch {
        return Err(EncoderError::Shape(format!(
            "{} output gradients for a batch of {batch}",
            d_outputs.len()
        )));
    }
    let dim = cfg.embedding_dim();
    if let Some(bad) = d_outputs.iter().find(|g| g.len() != dim) {
        return Err(EncoderError::Shape(format!(
            "output gradient of length {}, expected {dim}",
            bad.len()
        )));
    }
    let mut grads = EncoderParams::zeros(cfg);
    let dout: Vec<T> = d_outputs.iter().flatten().copied().collect();

    let d_fusion = match (&params.fc1, &params.fc2, &mut grads.fc1, &mut grads.fc2) {
        (Some(fc1), Some(fc2), Some(g1), Some(g2)) => {
            let mut dh = dense_backward(
                &trace.hidden,
                &dout,
                batch,
                fc2.inputs,
                fc2.outputs,
                &fc2.weight,
                &mut g2.weight,
                &mut g2.bias,
                true,
            )
            .expect("requested");
            if let Some(mask) = &trace.dropout_mask {
                for (g, m) in dh.iter_mut().zip(mask) {
                    *g *= *m;
                }
            }
            relu_backward_in_place(&trace.hidden_pre, &mut dh);
            dense_backward(
                &trace.fusion,
                &dh,
                batch,
                fc1.inputs,
                fc1.outputs,
                &fc1.weight,
                &mut g1.weight,
                &mut g1.bias,
                cfg.use_schema,
            )
        }
        _ => Some(dout),
    };

    if cfg.use_schema {
        let d_fusion = d_fusion.expect("schema branch needs the fusion gradient");
        let structural_dim = cfg.structural_dim();
        let fusion_dim = cfg.fusion_dim();
        let mut da = vec![T::zero(); batch * structural_dim];
        for n in 0..batch {
            da[n * structural_dim..(n + 1) * structural_dim]
                .copy_from_slice(&d_fusion[n * fusion_dim..n * fusion_dim + structural_dim]);
        }
        let len = cfg.sequence_length;
        for (l, (layer, ct)) in params.conv.iter().zip(&trace.conv).enumerate().rev() {
            let (ci, co) = (layer.in_channels, layer.out_channels);
            relu_backward_in_place(&ct.pre_activation, &mut da);
            let g = &mut grads.conv[l];
            let dz = batch_norm_backward(&da, &ct.norm, batch, co, len, &layer.gamma, &mut g.gamma, &mut g.beta);
            let dx = conv1d_backward(
                &ct.input,
                &dz,
                batch,
                ci,
                co,
                len,
                layer.kernel,
                &layer.weight,
                &mut g.weight,
                &mut g.bias,
                l > 0,
            );
            if let Some(dx) = dx {
                da = dx;
            }
        }
    }
    Ok(grads)
}

/// Folds one batch's statistics into the running estimates:
/// `running = (1 - momentum) · running + momentum · batch`, using the
/// unbiased batch variance.
pub fn update_running_stats<T: Scalar>(params: &mut EncoderParams<T>, trace: &ForwardTrace<T>) {
    let momentum = T::lit(params.config.bn_momentum);
    let keep = T::one() - momentum;
    for (layer, ct) in params.conv.iter_mut().zip(&trace.conv) {
        let m = ct.norm.count as f64;
        let unbias = T::lit(if m > 1.0 { m / (m - 1.0) } else { 1.0 });
        for c in 0..layer.out_channels {
            layer.running_mean[c] = keep * layer.running_mean[c] + momentum * ct.norm.mean[c];
            layer.running_var[c] = keep * layer.running_var[c] + momentum * ct.norm.var[c] * unbias;
        }
    }
}
