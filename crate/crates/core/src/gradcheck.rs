//! Central finite-difference check of the analytic gradients.
//!
//! The check runs train-mode batch normalization (batch statistics of the
//! checked sample) with dropout off, so the loss is a deterministic smooth
//! function of the parameters away from ReLU and hinge kinks.

use crate::encoder::{encode_chart, EncoderParams};
use crate::fact::{example_fact, parse_fact_json};
use crate::loss::LossWeights;
use crate::semantics::{SemanticLayout, VectorStore};
use crate::train::{batch_gradients, combined_loss, TrainError, TrainingSet};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_COORDINATES: usize = 200;
/// Step sizes outside this window trade truncation error for round-off (or
/// the reverse) and are reported as suspect.
pub const EPSILON_WINDOW: (f64, f64) = (1e-7, 1e-3);
/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero compare absolute differences against this scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Deliberate corruption of the analytic gradient, for testing the checker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fault {
    /// conv1 weight gradients become `1.5 · g + 1e-3`.
    ConvWeights,
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub coordinates: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: DEFAULT_EPSILON,
            coordinates: DEFAULT_COORDINATES,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub max_relative_error: f64,
    pub worst: Option<CoordinateCheck>,
    pub checks: Vec<CoordinateCheck>,
    /// Whether the triplet hinge was active, i.e. its branch was exercised.
    pub hinge_active: bool,
    pub warning: Option<String>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Coordinates per trainable tensor: every tensor gets an equal share (all of
/// it when small), the remainder is drawn from the whole parameter vector.
fn pick_coordinates(sizes: &[usize], wanted: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let total: usize = sizes.iter().sum();
    let wanted = wanted.min(total);
    let share = wanted / sizes.len().max(1);
    let mut picked = Vec::new();
    for (t, &n) in sizes.iter().enumerate() {
        let mut idx = sample(rng, n, share.min(n)).into_vec();
        idx.sort_unstable();
        picked.extend(idx.into_iter().map(|i| (t, i)));
    }
    while picked.len() < wanted {
        let mut flat = rng.random_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        if !picked.contains(&(t, flat)) {
            picked.push((t, flat));
        }
    }
    picked
}

/// Compares analytic and numeric gradients of the summed loss of `batch`.
pub fn grad_check(
    set: &TrainingSet<f64>,
    batch: &[usize],
    params: &EncoderParams<f64>,
    weights: &LossWeights,
    options: &GradCheckOptions,
) -> Result<GradCheckReport, TrainError> {
    let (breakdown, mut grads, _) = batch_gradients(set, batch, params, weights, None)?;
    if options.fault == Some(Fault::ConvWeights) {
        for g in grads.conv[0].weight.iter_mut() {
            *g = 1.5 * *g + 1e-3;
        }
    }
    let names = params.trainable_names();
    let sizes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
    let analytic = grads.trainable();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let coords = pick_coordinates(&sizes, options.coordinates, &mut rng);

    let eps = options.epsilon;
    let mut probe = params.clone();
    let mut checks = Vec::with_capacity(coords.len());
    for (t, i) in coords {
        let original = probe.trainable()[t][i];
        probe.trainable_mut()[t][i] = original + eps;
        let plus = combined_loss(set, batch, &probe, weights, None)?.breakdown.total;
        probe.trainable_mut()[t][i] = original - eps;
        let minus = combined_loss(set, batch, &probe, weights, None)?.breakdown.total;
        probe.trainable_mut()[t][i] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[t][i];
        checks.push(CoordinateCheck {
            tensor: names[t].clone(),
            index: i,
            analytic: a,
            numeric,
            relative_error: relative_error(a, numeric),
        });
    }
    let worst = checks
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .cloned();
    let warning = (!(EPSILON_WINDOW.0..=EPSILON_WINDOW.1).contains(&eps)).then(|| {
        format!(
            "epsilon {eps:e} is outside [{:e}, {:e}]; finite differences are dominated by {}",
            EPSILON_WINDOW.0,
            EPSILON_WINDOW.1,
            if eps > EPSILON_WINDOW.1 {
                "truncation error"
            } else {
                "round-off"
            }
        )
    });
    Ok(GradCheckReport {
        epsilon: eps,
        max_relative_error: worst.as_ref().map_or(0.0, |w| w.relative_error),
        worst,
        checks,
        hinge_active: breakdown.l2 > 0.0,
        warning,
    })
}

const BUILTIN_FACTS: [&str; 3] = [
    r#"{"type_c":"line chart","type_f":"trend","subspace":[{"field":"Country","value":"China","field_type":"geographical"}],"breakdown":{"field":"Year","field_type":"temporal"},"measure":{"field":"Population","aggregation":"sum"},"meta":{"kind":"trend","direction":"increasing"}}"#,
    r#"{"type_c":"pie chart","type_f":"proportion","breakdown":{"field":"Location","field_type":"categorical"},"measure":{"field":"Population","aggregation":"average"},"focus":{"field":"Location","field_type":"categorical","value":"Rural"}}"#,
    r#"{"type_c":"scatter plot","type_f":"association","measure":{"field":"Income","aggregation":"sum"},"meta":{"kind":"association","sign":"negative"}}"#,
];

/// A self-contained single-sample training set, used when no corpus is given.
/// Words resolve to their deterministic fallback vectors.
pub fn builtin_sample(layout: &SemanticLayout) -> TrainingSet<f64> {
    let store = VectorStore::new();
    let mut facts = vec![example_fact()];
    facts.extend(
        BUILTIN_FACTS
            .iter()
            .map(|s| parse_fact_json(s).expect("built-in fact parses")),
    );
    TrainingSet {
        charts: facts
            .iter()
            .map(|f| encode_chart(f, &store, layout).expect("built-in fact encodes"))
            .collect(),
        samples: vec![[0, 1, 2, 3]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn run(epsilon: f64, margin: f64, fault: Option<Fault>) -> GradCheckReport {
        let cfg = EncoderConfig {
            dropout: 0.0,
            ..Default::default()
        };
        let params = EncoderParams::init(11, &cfg).unwrap();
        let set = builtin_sample(&cfg.semantic);
        let weights = LossWeights {
            margin,
            ..Default::default()
        };
        let options = GradCheckOptions {
            epsilon,
            seed: 3,
            fault,
            ..Default::default()
        };
        grad_check(&set, &[0], &params, &weights, &options).unwrap()
    }

    #[test]
    fn coordinates_cover_every_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sizes = [1000, 3, 50, 7];
        let picked = pick_coordinates(&sizes, 20, &mut rng);
        assert_eq!(picked.len(), 20);
        for t in 0..sizes.len() {
            assert!(picked.iter().any(|(k, _)| *k == t));
        }
        let mut dedup = picked.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), picked.len());
    }

    #[test]
    fn analytic_gradients_match() {
        let report = run(DEFAULT_EPSILON, 1e3, None);
        assert!(report.hinge_active);
        assert!(report.checks.len() >= 200);
        assert!(report.max_relative_error < 1e-4, "{:?}", report.worst);
        assert!(report.warning.is_none());
    }

    #[test]
    fn corrupted_conv_gradient_is_caught() {
        let report = run(DEFAULT_EPSILON, 1e3, Some(Fault::ConvWeights));
        assert!(report.max_relative_error > 1e-2);
        assert_eq!(report.worst.unwrap().tensor, "conv1.weight");
    }

    #[test]
    fn extreme_steps_warn_and_degrade() {
        let good = run(DEFAULT_EPSILON, 1e3, None).max_relative_error;
        for eps in [1e-2, 1e-10] {
            let r = run(eps, 1e3, None);
            assert!(r.warning.is_some());
            assert!(
                r.max_relative_error > good,
                "eps {eps}: {} vs {good}",
                r.max_relative_error
            );
        }
    }
}
