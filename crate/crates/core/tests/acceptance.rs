//! Acceptance criteria. Runs every criterion, prints one line each and exits
//! non-zero when any criterion fails. Criterion 9 needs a full imported
//! corpus: set `FACTVEC_FULL_CORPUS` and `FACTVEC_FULL_VECTORS`.

use factvec::ablation::{run_ablation, Variant};
use factvec::checkpoint::{self, from_bytes, to_bytes, Checkpoint};
use factvec::corpus::{build_samples, split_corpus, Corpus, LoadMode, NegativePolicy};
use factvec::encoder::EncoderParams;
use factvec::fact::{
    Aggregation, AssociationSign, ChartFact, ChartType, DifferenceRelation, ExtremeKind, FactType, FieldRef, FieldType,
    Filter, Focus, MeasureSpec, MetaInfo, TrendDirection,
};
use factvec::grammar::{rules, FactSkeleton, MAX_RULES, RULE_COUNT};
use factvec::index::IndexEntry;
use factvec::loss::{embedding_loss, interpolation_loss, triplet_loss, LossWeights};
use factvec::metrics::{random_baseline, RandomBaseline};
use factvec::pipeline::{evaluate, fit, PipelineConfig};
use factvec::semantics::{pool_word, split_words};
use factvec::train::{combined_loss, step_count};
use factvec::{
    build_index, compute_metrics, decode_skeleton, derive_rules, encode_one_hot, load_corpus, validate_fact,
    EmbeddingIndex, EncoderConfig, Gaps, MetricsReport, VectorStore,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

const GRADCHECK_MAX_ERROR: f64 = 1e-4;
const GRADCHECK_MIN_COORDINATES: usize = 200;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(60);
const GRAMMAR_FACTS: usize = 1000;
const GRAMMAR_BUDGET: Duration = Duration::from_secs(10);
const LEARNING_EPOCHS: usize = 200;
const LEARNING_MIN_COOCCURRENCE: f64 = 0.8;
const LEARNING_TOP3_OVER_BASELINE: f64 = 2.0;
const LEARNING_BUDGET: Duration = Duration::from_secs(5 * 60);
// At most two of the single-switch variants may beat the full model. With
// ten ablations that is at least eight wins.
const ABLATION_MAX_LOSSES: usize = 2;
const ABLATION_BUDGET: Duration = Duration::from_secs(45 * 60);
const FULL_SAMPLES: f64 = 42_222.0;
const FULL_SAMPLES_TOLERANCE: f64 = 0.05;
const FULL_STEPS: f64 = 3_300.0;
const FULL_METRICS: [f64; 3] = [0.63, 0.73, 0.81];
const FULL_METRICS_TOLERANCE: f64 = 0.10;
const FULL_BUDGET: Duration = Duration::from_secs(60 * 60);

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn stories() -> (Corpus, VectorStore<f64>) {
    let corpus = load_corpus(fixture("stories10.json"), LoadMode::Strict).unwrap().corpus;
    let store = VectorStore::load(fixture("vectors.txt")).unwrap();
    (corpus, store)
}

fn learning_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.hyper.epochs = LEARNING_EPOCHS;
    // evaluated on the training corpus itself
    c.test_fraction = 0.0;
    c
}

fn gradient_fidelity() -> Verdict {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_factvec"))
        .args(["gradcheck", "--seed", "0", "--epsilon", "1e-5", "--coordinates", "200"])
        .output()
        .unwrap();
    let elapsed = started.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let field = |prefix: &str| -> f64 {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(prefix))
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(f64::NAN)
    };
    let coordinates = field("coordinates ");
    let error = field("max relative error ");
    check(
        out.status.success()
            && coordinates >= GRADCHECK_MIN_COORDINATES as f64
            && error < GRADCHECK_MAX_ERROR
            && elapsed < GRADCHECK_BUDGET,
        format!("{coordinates} coordinates, max relative error {error:e}, {elapsed:.1?}"),
    )
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn loss_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();

    let (l1, _, _) = interpolation_loss(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0], 0.0);
    if l1 != 0.0 {
        failures.push(format!("toy collinear triple gave {l1}"));
    }
    for _ in 0..200 {
        let dim = rng.random_range(1..64);
        let prev = random_vec(&mut rng, dim);
        let next = random_vec(&mut rng, dim);
        let mid: Vec<f64> = prev.iter().zip(&next).map(|(p, n)| (p + n) * 0.5).collect();
        let (l1, interp, _) = interpolation_loss(&prev, &mid, &next, 0.0);
        if l1 != 0.0 || interp != 0.0 {
            failures.push(format!("midpoint triple gave {l1}"));
        }

        let anchor = random_vec(&mut rng, dim);
        let positive = random_vec(&mut rng, dim);
        let margin = rng.random_range(0.1..2.0);
        let d_ap = dist(&anchor, &positive);
        // push the negative out along a random direction until it clears the margin
        let dir = random_vec(&mut rng, dim);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        let reach = d_ap + margin + rng.random_range(0.0..5.0);
        let negative: Vec<f64> = anchor
            .iter()
            .zip(&dir)
            .map(|(a, d)| a + d / norm * reach * 1.001)
            .collect();
        if dist(&anchor, &negative) >= d_ap + margin {
            let l2 = triplet_loss(&anchor, &positive, &negative, margin);
            if l2 != 0.0 {
                failures.push(format!("inactive hinge gave {l2}"));
            }
        }

        let quads: Vec<[Vec<f64>; 4]> = (0..3)
            .map(|_| std::array::from_fn(|_| random_vec(&mut rng, dim)))
            .collect();
        let refs: Vec<[&[f64]; 4]> = quads.iter().map(|q| std::array::from_fn(|i| q[i].as_slice())).collect();
        let w = LossWeights {
            alpha: rng.random_range(0.0..2.0),
            beta: 0.0,
            ..Default::default()
        };
        let (b, _) = embedding_loss(&refs, &w);
        if b.total != b.l1 {
            failures.push(format!("beta 0 gave total {} against l1 {}", b.total, b.l1));
        }
    }

    let config = EncoderConfig {
        dropout: 0.0,
        ..Default::default()
    };
    let params = EncoderParams::<f64>::init(4, &config).unwrap();
    let set = factvec::gradcheck::builtin_sample(&config.semantic);
    let w = LossWeights {
        beta: 0.0,
        ..Default::default()
    };
    let b = combined_loss(&set, &[0], &params, &w, None).unwrap().breakdown;
    if b.total != b.l1 || b.l2 <= 0.0 {
        failures.push(format!(
            "encoder batch with beta 0: total {} l1 {} l2 {}",
            b.total, b.l1, b.l2
        ));
    }

    check(
        failures.is_empty(),
        if failures.is_empty() {
            "all identities hold exactly".into()
        } else {
            failures.join("; ")
        },
    )
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn word(rng: &mut ChaCha8Rng) -> String {
    const WORDS: [&str; 12] = [
        "Year", "Country", "Sales", "Region", "Month", "Profit", "City", "Team", "Score", "Rural", "Brand", "2018",
    ];
    let w = pick(rng, &WORDS);
    if rng.random_bool(0.3) {
        format!("{w} {}", pick(rng, &WORDS))
    } else {
        w.to_string()
    }
}

fn maybe<T>(rng: &mut ChaCha8Rng, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> Option<T> {
    rng.random_bool(0.7).then(|| f(rng))
}

fn random_fact(rng: &mut ChaCha8Rng) -> ChartFact {
    let type_f = pick(rng, FactType::ALL);
    let filters = rng.random_range(0..=3);
    let subspace = (0..filters)
        .map(|_| Filter {
            field: word(rng),
            value: word(rng),
            field_type: pick(rng, FieldType::ALL),
        })
        .collect();
    let breakdown = maybe(rng, |r| FieldRef {
        field: word(r),
        field_type: pick(r, &[FieldType::Temporal, FieldType::Categorical]),
    });
    let measure = maybe(rng, |r| MeasureSpec {
        field: format!("{} amount", word(r)),
        aggregation: pick(r, Aggregation::ALL),
    });
    let focus = maybe(rng, |r| Focus {
        field: word(r),
        field_type: pick(r, FieldType::ALL),
        value: word(r),
    });
    let meta = if rng.random_bool(0.25) {
        MetaInfo::None
    } else {
        match type_f {
            FactType::Trend => MetaInfo::Trend {
                direction: pick(rng, TrendDirection::ALL),
            },
            FactType::Categorization => MetaInfo::Categorization {
                count: rng.random_range(1..50),
            },
            FactType::Difference => MetaInfo::Difference {
                relation: pick(rng, DifferenceRelation::ALL),
            },
            FactType::Rank => MetaInfo::Rank {
                top3: (0..rng.random_range(1..=3)).map(|_| word(rng)).collect(),
            },
            FactType::Extreme => MetaInfo::Extreme {
                extreme: pick(rng, ExtremeKind::ALL),
            },
            FactType::Association => MetaInfo::Association {
                sign: pick(rng, AssociationSign::ALL),
            },
            _ => MetaInfo::None,
        }
    };
    ChartFact {
        type_c: pick(rng, ChartType::ALL),
        type_f,
        subspace,
        breakdown,
        measure,
        focus,
        meta,
    }
}

fn grammar() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    if rules().len() != 60 {
        failures.push(format!("{} rules", rules().len()));
    }
    let mut facts = 0;
    let mut lengths = (usize::MAX, 0);
    while facts < GRAMMAR_FACTS {
        let fact = random_fact(&mut rng);
        if !validate_fact(&fact).is_valid() {
            continue;
        }
        facts += 1;
        let seq = derive_rules(&fact).unwrap();
        lengths = (lengths.0.min(seq.len()), lengths.1.max(seq.len()));
        if !(8..=13).contains(&seq.len()) {
            failures.push(format!("{} rules derived", seq.len()));
        }
        if decode_skeleton(&seq).ok() != Some(FactSkeleton::of(&fact)) {
            failures.push(format!("skeleton mismatch for {fact:?}"));
        }
        let m = encode_one_hot(&seq).unwrap();
        for r in 0..MAX_RULES {
            let row = m.row(r);
            let ones = row.iter().filter(|&&v| v == 1).count();
            if row.len() != RULE_COUNT || ones > 1 || row.iter().any(|&v| v > 1) {
                failures.push(format!("row {r} is not one-hot or zero"));
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed >= GRAMMAR_BUDGET {
        failures.push(format!("took {elapsed:.1?}"));
    }
    failures.truncate(5);
    check(
        failures.is_empty(),
        format!(
            "{facts} facts, derivation lengths {}..={}, {elapsed:.1?} {}",
            lengths.0,
            lengths.1,
            failures.join("; ")
        ),
    )
}

fn semantics() -> Verdict {
    let fields = [
        "Country name",
        "City name",
        "Year",
        "Student population",
        "Year",
        "2018",
    ];
    let words: Vec<String> = fields.iter().flat_map(|f| split_words(f)).collect();
    let expected = [
        "Country",
        "name",
        "City",
        "name",
        "Year",
        "Student",
        "population",
        "Year",
        "2018",
    ];
    let split_ok = words == expected;

    let ramp: Vec<f64> = (0..100).map(f64::from).collect();
    let pooled = pool_word(&ramp);
    let want: Vec<f64> = (0..10).map(|j| 10.0 * j as f64 + 4.5).collect();
    let pool_ok = pooled == want;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let x = random_vec(&mut rng, 100);
        let y = random_vec(&mut rng, 100);
        let (a, b) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = pool_word(&mix);
        let rhs: Vec<f64> = pool_word(&x)
            .iter()
            .zip(pool_word(&y))
            .map(|(p, q)| a * p + b * q)
            .collect();
        for (l, r) in lhs.iter().zip(&rhs) {
            worst = worst.max((l - r).abs());
        }
    }
    // pooling is a mean of ten terms, so rounding stays within a few ulps of 40
    let linear_ok = worst < 1e-12;
    check(
        split_ok && pool_ok && linear_ok,
        format!("split {split_ok}, ramp pooling {pool_ok}, linearity max deviation {worst:e}"),
    )
}

/// Independent evaluator: scan every same-dataset pair, keep the closest,
/// break distance ties by the smaller chart id.
fn brute_force(entries: &[IndexEntry<f64>], gaps: Gaps) -> (f64, f64, f64, usize) {
    let (mut t2, mut t3, mut co, mut n) = (0usize, 0usize, 0usize, 0usize);
    for a in entries {
        let mut best: Option<(f64, &IndexEntry<f64>)> = None;
        for c in entries {
            if c.chart_id == a.chart_id || c.dataset_id != a.dataset_id {
                continue;
            }
            let d = dist(&a.vector, &c.vector);
            best = match best {
                Some((bd, b)) if bd < d || (bd == d && b.chart_id < c.chart_id) => Some((bd, b)),
                _ => Some((d, c)),
            };
        }
        let Some((_, hit)) = best else { continue };
        n += 1;
        if hit.story_id == a.story_id {
            co += 1;
            let gap = a.position.abs_diff(hit.position);
            t2 += usize::from(gap <= gaps.gap2);
            t3 += usize::from(gap <= gaps.gap3);
        }
    }
    let r = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    (r(t2), r(t3), r(co), n)
}

fn metric_oracle() -> Verdict {
    let (corpus, store) = stories();
    assert!(corpus.chart_count() <= 50);
    let mut indices: Vec<(String, EmbeddingIndex<f64>)> = Vec::new();
    let config = EncoderConfig::default();
    for seed in 0..3 {
        let params = EncoderParams::init(seed, &config).unwrap();
        indices.push((
            format!("init seed {seed}"),
            build_index(&corpus, &store, &params).unwrap(),
        ));
    }
    let mut cfg = PipelineConfig::default();
    cfg.hyper.epochs = 5;
    cfg.test_fraction = 0.0;
    let fitted = fit(&corpus, &store, &cfg).unwrap();
    indices.push((
        "trained".into(),
        build_index(&corpus, &store, &fitted.outcome.params).unwrap(),
    ));
    // coarse grid vectors force many exact distance ties
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coarse: Vec<IndexEntry<f64>> = indices[0]
        .1
        .entries()
        .iter()
        .map(|e| IndexEntry {
            vector: (0..3).map(|_| f64::from(rng.random_range(0..2u8))).collect(),
            ..e.clone()
        })
        .collect();
    indices.push(("ties".into(), EmbeddingIndex::from_entries(coarse).unwrap()));

    let mut mismatches = Vec::new();
    for (name, index) in &indices {
        for gaps in [Gaps::default(), Gaps { gap2: 1, gap3: 2 }] {
            let m = compute_metrics(index, gaps).unwrap();
            let oracle = brute_force(index.entries(), gaps);
            if (m.top2, m.top3, m.cooccurrence, m.n_anchors) != oracle {
                mismatches.push(format!("{name}: {:?} vs {oracle:?}", (m.top2, m.top3, m.cooccurrence)));
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!(
            "{} indices of {} charts; {}",
            indices.len(),
            corpus.chart_count(),
            mismatches.join("; ")
        ),
    )
}

fn learning_signal() -> (Verdict, Option<(MetricsReport, RandomBaseline)>) {
    let (corpus, store) = stories();
    let started = Instant::now();
    let fitted = fit(&corpus, &store, &learning_config()).unwrap();
    let (index, report) = evaluate(&corpus, &store, &fitted.outcome.params, Gaps::default()).unwrap();
    let elapsed = started.elapsed();
    let baseline = random_baseline(&index, Gaps::default());
    let last = fitted.outcome.history.last().unwrap().loss;
    let ok = report.cooccurrence >= LEARNING_MIN_COOCCURRENCE
        && report.top3 >= LEARNING_TOP3_OVER_BASELINE * baseline.top3
        && elapsed < LEARNING_BUDGET;
    let detail = format!(
        "co-occurrence {:.3} (need {LEARNING_MIN_COOCCURRENCE}), top3 {:.3} vs baseline {:.3} (need x{LEARNING_TOP3_OVER_BASELINE}), final l1 {:.4} l2 {:.4}, {elapsed:.1?}",
        report.cooccurrence, report.top3, baseline.top3, last.l1, last.l2
    );
    (check(ok, detail), Some((report, baseline)))
}

fn ablation_direction(full: Option<&MetricsReport>) -> Verdict {
    let (corpus, store) = stories();
    let started = Instant::now();
    let rows = run_ablation(&corpus, &store, &learning_config(), &Variant::ALL, Gaps::default());
    let elapsed = started.elapsed();
    let score = |v: Variant| {
        rows.iter()
            .find(|r| r.variant == v)
            .and_then(|r| r.metrics.as_ref())
            .map(|m| m.cooccurrence)
    };
    let Some(full_co) = score(Variant::Full) else {
        return Verdict::Fail("full variant failed to train".into());
    };
    let mut losses = Vec::new();
    for &v in &Variant::ALL[1..] {
        match score(v) {
            Some(co) if co <= full_co => {}
            Some(co) => losses.push(format!("{} {co:.3}", v.name())),
            None => losses.push(format!("{} failed", v.name())),
        }
    }
    let comparisons = Variant::ALL.len() - 1;
    let consistent = full.is_none_or(|m| m.cooccurrence == full_co);
    check(
        losses.len() <= ABLATION_MAX_LOSSES && consistent && elapsed < ABLATION_BUDGET,
        format!(
            "full {full_co:.3} wins {}/{comparisons}, beaten by [{}], {elapsed:.1?}{}",
            comparisons - losses.len(),
            losses.join(", "),
            if consistent {
                ""
            } else {
                ", full row differs from the plain run"
            }
        ),
    )
}

fn reproducibility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_factvec"))
            .arg("train")
            .arg(fixture("stories10.json"))
            .arg("--vectors")
            .arg(fixture("vectors.txt"))
            .arg("--out")
            .arg(&out)
            .args(["--epochs", "3", "--seed", "9"])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        out
    };
    let (a, b) = (run("a.ck"), run("b.ck"));
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    let manifest = |p: &Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(format!("{}.manifest.json", p.display())).unwrap()).unwrap();
        v["wall_ms"] = serde_json::Value::Null;
        v["outputs"] = serde_json::Value::Null;
        v
    };
    let same_manifest = manifest(&a) == manifest(&b);
    let identical = bytes_a == bytes_b;

    let loaded: Checkpoint<f64> = checkpoint::load(&a).unwrap();
    let roundtrip = to_bytes(&loaded) == bytes_a && from_bytes::<f64>(&bytes_a).unwrap() == loaded;
    let resaved = dir.path().join("c.ck");
    checkpoint::save(&loaded, &resaved).unwrap();
    let resave_ok = std::fs::read(&resaved).unwrap() == bytes_a;
    check(
        same_manifest && identical && roundtrip && resave_ok,
        format!(
            "manifests equal {same_manifest}, checkpoints identical {identical} ({} bytes), roundtrip {}",
            bytes_a.len(),
            roundtrip && resave_ok
        ),
    )
}

fn full_scale() -> Verdict {
    let (Ok(corpus_path), Ok(vectors_path)) = (
        std::env::var("FACTVEC_FULL_CORPUS"),
        std::env::var("FACTVEC_FULL_VECTORS"),
    ) else {
        return Verdict::Skip("FACTVEC_FULL_CORPUS / FACTVEC_FULL_VECTORS not set".into());
    };
    let started = Instant::now();
    let corpus = load_corpus(&corpus_path, LoadMode::Lenient).unwrap().corpus;
    let store = VectorStore::<f64>::load(&vectors_path).unwrap();
    let mut config = PipelineConfig::default();
    config.test_fraction = 104.0 / 1098.0;
    let (train_side, _) = split_corpus(&corpus, config.test_fraction, config.hyper.seed).unwrap();
    let samples = build_samples(
        &train_side,
        config.negatives_per_window,
        NegativePolicy::SameDatasetFirst,
        0,
    )
    .unwrap()
    .len();
    let steps = step_count(samples, config.hyper.batch_size, config.hyper.epochs);
    let fitted = fit(&corpus, &store, &config).unwrap();
    let (_, m) = evaluate(
        fitted.split.evaluation(),
        &store,
        &fitted.outcome.params,
        Gaps::default(),
    )
    .unwrap();
    let elapsed = started.elapsed();
    let samples_ok = (samples as f64 - FULL_SAMPLES).abs() <= FULL_SAMPLES_TOLERANCE * FULL_SAMPLES;
    let steps_ok = (steps as f64 - FULL_STEPS).abs() <= FULL_SAMPLES_TOLERANCE * FULL_STEPS;
    let metrics = [m.top2, m.top3, m.cooccurrence];
    let metrics_ok = metrics
        .iter()
        .zip(FULL_METRICS)
        .all(|(got, want)| (got - want).abs() <= FULL_METRICS_TOLERANCE);
    check(
        samples_ok && steps_ok && metrics_ok && elapsed <= FULL_BUDGET,
        format!(
            "{} train / {} test visualizations, {samples} samples, {steps} steps, metrics {metrics:.3?}, {elapsed:.1?}",
            fitted.split.train.visualizations.len(),
            fitted.split.test.as_ref().map_or(0, |t| t.visualizations.len())
        ),
    )
}

fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())
    })
}

fn main() {
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |n: usize, name: &'static str, v: Result<Verdict, String>| {
        let v = v.unwrap_or_else(|e| Verdict::Fail(format!("panicked: {e}")));
        let (tag, detail) = match &v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n} {name}: {tag} {detail}");
        verdicts.push((n, name, v));
    };
    record(1, "gradient fidelity", guarded(gradient_fidelity));
    record(2, "loss identities", guarded(loss_identities));
    record(3, "grammar", guarded(grammar));
    record(4, "semantics", guarded(semantics));
    record(5, "metric oracle", guarded(metric_oracle));
    let learned = guarded(learning_signal);
    let full = learned.as_ref().ok().and_then(|(_, m)| m.clone());
    record(6, "learning signal", learned.map(|(v, _)| v));
    record(
        7,
        "ablation direction",
        guarded(|| ablation_direction(full.as_ref().map(|(m, _)| m))),
    );
    record(8, "reproducibility", guarded(reproducibility));
    record(9, "full-scale stretch", guarded(full_scale));

    let failed: Vec<String> = verdicts
        .iter()
        .filter(|(_, _, v)| matches!(v, Verdict::Fail(_)))
        .map(|(n, name, _)| format!("{n} ({name})"))
        .collect();
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
