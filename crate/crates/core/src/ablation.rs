//! Ablation harness: train and evaluate each variant from one seed and corpus.

use crate::alloc;
use crate::corpus::Corpus;
use crate::loss::{LossBreakdown, Objectives};
use crate::metrics::{Gaps, MetricsReport};
use crate::pipeline::{evaluate, fit, PipelineConfig};
use crate::semantics::{PoolingMode, VectorStore};
use serde::Serialize;
use std::fmt::Write as _;
use std::time::Instant;

/// The full model and its ten single-switch ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    Full,
    NoLinearInterpolation,
    NoClassification,
    NoFactSchema,
    NoFactSemantics,
    NoWordPooling,
    WordsAvgPooling,
    WordMaxPooling,
    WordsMaxPooling,
    NoPos,
    NoFc,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Full,
        Variant::NoLinearInterpolation,
        Variant::NoClassification,
        Variant::NoFactSchema,
        Variant::NoFactSemantics,
        Variant::NoWordPooling,
        Variant::WordsAvgPooling,
        Variant::WordMaxPooling,
        Variant::WordsMaxPooling,
        Variant::NoPos,
        Variant::NoFc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLinearInterpolation => "no-linear-interpolation",
            Variant::NoClassification => "no-classification",
            Variant::NoFactSchema => "no-fact-schema",
            Variant::NoFactSemantics => "no-fact-semantics",
            Variant::NoWordPooling => "no-word-pooling",
            Variant::WordsAvgPooling => "words-avg-pooling",
            Variant::WordMaxPooling => "word-max-pooling",
            Variant::WordsMaxPooling => "words-max-pooling",
            Variant::NoPos => "no-pos",
            Variant::NoFc => "no-fc",
        }
    }

    /// Applies this variant's switches to a base configuration.
    pub fn configure(self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        let enc = &mut c.encoder;
        let obj = &mut c.hyper.loss.objectives;
        match self {
            Variant::Full => {}
            Variant::NoLinearInterpolation => obj.interpolation = false,
            Variant::NoClassification => obj.triplet = false,
            Variant::NoFactSchema => enc.use_schema = false,
            Variant::NoFactSemantics => enc.use_semantics = false,
            Variant::NoWordPooling => enc.semantic.pooling = PoolingMode::None,
            Variant::WordsAvgPooling => enc.semantic.pooling = PoolingMode::WordsAvg,
            Variant::WordMaxPooling => enc.semantic.pooling = PoolingMode::WordMax,
            Variant::WordsMaxPooling => enc.semantic.pooling = PoolingMode::WordsMax,
            Variant::NoPos => enc.semantic.location_markers = false,
            Variant::NoFc => enc.use_fc = false,
        }
        c
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown ablation variant `{s}`"))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub metrics: Option<MetricsReport>,
    /// Loss of the final epoch.
    pub final_loss: Option<LossBreakdown>,
    pub objectives: Objectives,
    pub error: Option<String>,
    pub wall_ms: u128,
    pub peak_bytes: Option<usize>,
}

/// Runs every variant in order. A failing variant is recorded and the
/// remaining ones still run.
pub fn run_ablation(
    corpus: &Corpus,
    store: &VectorStore<f64>,
    base: &PipelineConfig,
    variants: &[Variant],
    gaps: Gaps,
) -> Vec<AblationRow> {
    variants
        .iter()
        .map(|&variant| {
            let config = variant.configure(base);
            alloc::reset_peak();
            let started = Instant::now();
            let result = fit(corpus, store, &config).and_then(|fitted| {
                let (_, report) = evaluate(fitted.split.evaluation(), store, &fitted.outcome.params, gaps)?;
                Ok((report, fitted.outcome.history.last().map(|h| h.loss)))
            });
            let wall_ms = started.elapsed().as_millis();
            let peak_bytes = alloc::peak_bytes();
            let objectives = config.hyper.loss.objectives;
            match result {
                Ok((report, final_loss)) => AblationRow {
                    variant,
                    metrics: Some(report),
                    final_loss,
                    objectives,
                    error: None,
                    wall_ms,
                    peak_bytes,
                },
                Err(e) => AblationRow {
                    variant,
                    metrics: None,
                    final_loss: None,
                    objectives,
                    error: Some(e.to_string()),
                    wall_ms,
                    peak_bytes,
                },
            }
        })
        .collect()
}

/// `variant,top2,top3,cooccurrence,wall_ms,peak_bytes`; metric cells of a
/// failed variant are empty.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,top2,top3,cooccurrence,wall_ms,peak_bytes\n");
    for r in rows {
        let (t2, t3, co) = match &r.metrics {
            Some(m) => (m.top2.to_string(), m.top3.to_string(), m.cooccurrence.to_string()),
            None => Default::default(),
        };
        let peak = r.peak_bytes.map(|b| b.to_string()).unwrap_or_default();
        writeln!(out, "{},{t2},{t3},{co},{},{peak}", r.variant.name(), r.wall_ms).unwrap();
    }
    out
}

/// Aligned table with the final-epoch loss terms; masked terms print as `—`.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<24} {:>6} {:>6} {:>6} {:>12} {:>12} {:>10} {:>12}",
        "variant", "top2", "top3", "co-oc", "l1", "l2", "wall_ms", "peak_bytes"
    )
    .unwrap();
    for r in rows {
        let peak = r.peak_bytes.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        match (&r.metrics, &r.error) {
            (Some(m), _) => {
                let term = |on: bool, v: Option<f64>| match (on, v) {
                    (false, _) => "—".to_string(),
                    (true, Some(v)) => format!("{v:.4}"),
                    (true, None) => "-".to_string(),
                };
                let l1 = term(r.objectives.interpolation, r.final_loss.map(|l| l.l1));
                let l2 = term(r.objectives.triplet, r.final_loss.map(|l| l.l2));
                writeln!(
                    out,
                    "{:<24} {:>6.3} {:>6.3} {:>6.3} {:>12} {:>12} {:>10} {:>12}",
                    r.variant.name(),
                    m.top2,
                    m.top3,
                    m.cooccurrence,
                    l1,
                    l2,
                    r.wall_ms,
                    peak
                )
                .unwrap();
            }
            (None, err) => {
                writeln!(
                    out,
                    "{:<24} failed: {}",
                    r.variant.name(),
                    err.as_deref().unwrap_or("unknown error")
                )
                .unwrap();
            }
        }
    }
    out
}
