use clap::{Args, Parser, Subcommand, ValueEnum};
use factvec::ablation::{ablation_csv, ablation_table, run_ablation, Variant};
use factvec::checkpoint::{self, Checkpoint, CheckpointError};
use factvec::corpus::{load_corpus, CorpusError, LoadMode, NegativePolicy};
use factvec::encoder::{EncoderConfig, EncoderParams};
use factvec::gradcheck::{builtin_sample, grad_check, Fault, GradCheckOptions, DEFAULT_COORDINATES, DEFAULT_EPSILON};
use factvec::grammar::grammar_dump;
use factvec::import::import_calliope;
use factvec::index::{build_index, EmbeddingIndex, IndexError, Scope};
use factvec::loss::LossWeights;
use factvec::manifest::{digest_file, RunManifest};
use factvec::metrics::{compute_metrics, random_baseline, Gaps};
use factvec::pipeline::{fit, split, PipelineConfig, PipelineError};
use factvec::semantics::{SemanticsError, VectorStore};
use factvec::train::{history_csv, TrainError};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[global_allocator]
static ALLOC: factvec::alloc::PeakAlloc = factvec::alloc::PeakAlloc;

#[derive(Parser)]
#[command(
    name = "factvec",
    version,
    about = "Context-aware embeddings of declarative chart facts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strictly validate a corpus file; violations go to stderr.
    Validate { corpus: PathBuf },
    /// Split, sample and train; writes the checkpoint, `<out>.history.csv` and `<out>.manifest.json`.
    Train {
        corpus: PathBuf,
        /// Word vector file (text format, 100 dimensions).
        #[arg(long)]
        vectors: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        options: TrainOptions,
    },
    /// Embed every chart of a corpus into a TSV index.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Word vectors; without them every word uses its fallback vector.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Embed only one side of the dataset split.
        #[arg(long, value_enum)]
        split: Option<Side>,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Nearest charts of one anchor.
    Nearest {
        index: PathBuf,
        anchor: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// `same-dataset` or `all`.
        #[arg(long, default_value = "same-dataset")]
        scope: Scope,
    },
    /// Retrieval metrics of an index.
    Eval {
        index: PathBuf,
        #[arg(long, default_value_t = 2)]
        gap2: usize,
        #[arg(long, default_value_t = 3)]
        gap3: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also print the expected metrics of uniformly random retrieval.
        #[arg(long)]
        baseline: bool,
    },
    /// Train and evaluate ablation variants; prints CSV to stdout and a table to stderr.
    Ablate {
        corpus: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        /// Comma-separated variant names; all variants when omitted.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long, default_value_t = 2)]
        gap2: usize,
        #[arg(long, default_value_t = 3)]
        gap3: usize,
        #[command(flatten)]
        options: TrainOptions,
    },
    /// Compare analytic gradients with central differences on a built-in sample.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_COORDINATES)]
        coordinates: usize,
        /// Large enough by default that the hinge term is active.
        #[arg(long, default_value_t = 1e3)]
        margin: f64,
        /// Corrupt the conv1 weight gradient before comparing.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Print the rule table: `id<TAB>lhs<TAB>rhs`.
    Grammar,
    /// Convert a story export into corpus JSON.
    Import {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ImportFormat::Calliope)]
        format: ImportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Train,
    Test,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImportFormat {
    Calliope,
}

/// Training flags. A `--config` JSON file may set the same keys (snake case);
/// flags given on the command line win.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainOptions {
    /// Weight of the pairwise distance term [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the triplet term [default: 1]
    #[arg(long)]
    beta: Option<f64>,
    /// Triplet margin [default: 1]
    #[arg(long)]
    margin: Option<f64>,
    /// Adam learning rate [default: 0.01]
    #[arg(long)]
    lr: Option<f64>,
    /// Samples per batch [default: 128]
    #[arg(long)]
    batch: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed of every random choice [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Share of visualizations held out; 0 trains on everything [default: 0.1]
    #[arg(long)]
    test_fraction: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    dropout: Option<f64>,
    /// Negatives drawn per window [default: 1]
    #[arg(long)]
    negatives: Option<usize>,
    /// `same-dataset-first` or `any` [default: same-dataset-first]
    #[arg(long)]
    policy: Option<String>,
    /// JSON file with any of the keys above in snake case; flags win
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl TrainOptions {
    fn merged(&self) -> Result<TrainOptions, CliError> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let text = read_text(path)?;
        let file: TrainOptions =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(TrainOptions {
            alpha: self.alpha.or(file.alpha),
            beta: self.beta.or(file.beta),
            margin: self.margin.or(file.margin),
            lr: self.lr.or(file.lr),
            batch: self.batch.or(file.batch),
            epochs: self.epochs.or(file.epochs),
            seed: self.seed.or(file.seed),
            test_fraction: self.test_fraction.or(file.test_fraction),
            dropout: self.dropout.or(file.dropout),
            negatives: self.negatives.or(file.negatives),
            policy: self.policy.clone().or(file.policy),
            config: self.config.clone(),
        })
    }

    fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let o = self.merged()?;
        let mut c = PipelineConfig::default();
        let h = &mut c.hyper;
        let l = &mut h.loss;
        l.alpha = o.alpha.unwrap_or(l.alpha);
        l.beta = o.beta.unwrap_or(l.beta);
        l.margin = o.margin.unwrap_or(l.margin);
        h.learning_rate = o.lr.unwrap_or(h.learning_rate);
        h.batch_size = o.batch.unwrap_or(h.batch_size);
        h.epochs = o.epochs.unwrap_or(h.epochs);
        h.seed = o.seed.unwrap_or(h.seed);
        h.dropout = o.dropout.unwrap_or(h.dropout);
        c.test_fraction = o.test_fraction.unwrap_or(c.test_fraction);
        c.negatives_per_window = o.negatives.unwrap_or(c.negatives_per_window);
        if let Some(p) = &o.policy {
            let policy: NegativePolicy = p.parse().map_err(CliError::Usage)?;
            c.same_dataset_first = policy == NegativePolicy::SameDatasetFirst;
        }
        c.encoder.dropout = h.dropout;
        Ok(c)
    }
}

enum CliError {
    /// Bad arguments or unreadable input (exit 2).
    Usage(String),
    /// The inputs were read but the operation failed (exit 1).
    Domain(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Usage(e.to_string()),
            CorpusError::Invalid(ref v) => {
                for violation in v {
                    eprintln!("{violation}");
                }
                CliError::Domain(e.to_string())
            }
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<SemanticsError> for CliError {
    fn from(e: SemanticsError) -> Self {
        match e {
            SemanticsError::Dimension { .. } => CliError::Domain(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(_) => CliError::Usage(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Format { .. } => CliError::Usage(e.to_string()),
            IndexError::Corpus(c) => c.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidHyperParams(_) => CliError::Usage(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Corpus(c) => c.into(),
            PipelineError::Train(t) => t.into(),
            PipelineError::Index(i) => i.into(),
            PipelineError::Metrics(m) => CliError::Domain(m.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn digest(path: &Path) -> Result<factvec::manifest::InputDigest, CliError> {
    digest_file(path).map_err(|e| io_error(path, e))
}

fn load_index(path: &Path) -> Result<EmbeddingIndex<f64>, CliError> {
    Ok(EmbeddingIndex::from_tsv(&read_text(path)?)?)
}

fn validate(corpus: &Path) -> Result<(), CliError> {
    let loaded = load_corpus(corpus, LoadMode::Strict)?;
    let c = &loaded.corpus;
    println!(
        "ok: {} visualizations, {} charts, {} datasets",
        c.visualizations.len(),
        c.chart_count(),
        c.datasets().len()
    );
    Ok(())
}

fn cmd_train(corpus_path: &Path, vectors: &Path, out: &Path, options: &TrainOptions) -> Result<(), CliError> {
    let started = Instant::now();
    let config = options.pipeline()?;
    let corpus = load_corpus(corpus_path, LoadMode::Strict)?.corpus;
    let store = VectorStore::<f64>::load(vectors)?;
    let fitted = fit(&corpus, &store, &config).map_err(|e| {
        if let PipelineError::Train(TrainError::Divergence { breakdown, .. }) = &e {
            eprintln!("diverged with loss terms {breakdown:?}");
        }
        CliError::from(e)
    })?;
    let ck = Checkpoint {
        params: fitted.outcome.params,
        loss: config.hyper.loss,
    };
    checkpoint::save(&ck, out)?;
    let history = sibling(out, ".history.csv");
    write(&history, history_csv(&fitted.outcome.history))?;

    let mut manifest = RunManifest::new(
        "train",
        config.hyper.seed,
        serde_json::to_value(&config).expect("config serializes"),
    );
    manifest.inputs.push(digest(corpus_path)?);
    manifest.inputs.push(digest(vectors)?);
    if let Some(c) = &options.config {
        manifest.inputs.push(digest(c)?);
    }
    manifest.outputs.push(digest(out)?);
    manifest.outputs.push(digest(&history)?);
    manifest.wall_ms = started.elapsed().as_millis();
    write(&sibling(out, ".manifest.json"), manifest.to_json())?;

    let last = fitted.outcome.history.last();
    eprintln!(
        "trained {} samples, {} steps; final loss {}",
        fitted.samples.len(),
        fitted.outcome.steps,
        last.map_or("n/a".to_string(), |h| format!("{:.6}", h.loss.total))
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_embed(
    checkpoint_path: &Path,
    corpus_path: &Path,
    vectors: Option<&Path>,
    out: &Path,
    side: Option<Side>,
    test_fraction: f64,
    seed: u64,
) -> Result<(), CliError> {
    let ck: Checkpoint<f64> = checkpoint::load(checkpoint_path)?;
    let corpus = load_corpus(corpus_path, LoadMode::Strict)?.corpus;
    let store = match vectors {
        Some(p) => VectorStore::<f64>::load(p)?,
        None => VectorStore::new(),
    };
    let corpus = match side {
        None => corpus,
        Some(side) => {
            let s = split(&corpus, test_fraction, seed)?;
            match side {
                Side::Train => s.train,
                Side::Test => s.test.unwrap_or_default(),
            }
        }
    };
    let index = build_index(&corpus, &store, &ck.params)?;
    write(out, index.to_tsv())?;
    eprintln!("embedded {} charts", index.len());
    Ok(())
}

fn cmd_eval(path: &Path, gaps: Gaps, format: Format, baseline: bool) -> Result<(), CliError> {
    let index = load_index(path)?;
    let report = compute_metrics(&index, gaps).map_err(|e| CliError::Domain(e.to_string()))?;
    let base = baseline.then(|| random_baseline(&index, gaps));
    match format {
        Format::Json => {
            let mut v = serde_json::to_value(&report).expect("report serializes");
            if let Some(b) = base {
                v["random_baseline"] = serde_json::to_value(b).expect("baseline serializes");
            }
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        }
        Format::Text => {
            print!("{}", report.to_text());
            if let Some(b) = base {
                println!(
                    "random baseline: top2 {:.4} top3 {:.4} cooccurrence {:.4}",
                    b.top2, b.top3, b.cooccurrence
                );
            }
        }
    }
    Ok(())
}

fn cmd_ablate(
    corpus_path: &Path,
    vectors: &Path,
    variants: &[Variant],
    gaps: Gaps,
    options: &TrainOptions,
) -> Result<(), CliError> {
    let base = options.pipeline()?;
    let corpus = load_corpus(corpus_path, LoadMode::Strict)?.corpus;
    let store = VectorStore::<f64>::load(vectors)?;
    let variants = if variants.is_empty() {
        &Variant::ALL[..]
    } else {
        variants
    };
    let rows = run_ablation(&corpus, &store, &base, variants, gaps);
    eprint!("{}", ablation_table(&rows));
    print!("{}", ablation_csv(&rows));
    if rows.iter().any(|r| r.error.is_some()) {
        return Err(CliError::Domain("at least one variant failed".into()));
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, epsilon: f64, coordinates: usize, margin: f64, fault: bool) -> Result<(), CliError> {
    let config = EncoderConfig {
        dropout: 0.0,
        ..Default::default()
    };
    let params = EncoderParams::init(seed, &config).map_err(|e| CliError::Domain(e.to_string()))?;
    let set = builtin_sample(&config.semantic);
    let weights = LossWeights {
        margin,
        ..Default::default()
    };
    let options = GradCheckOptions {
        epsilon,
        coordinates,
        seed,
        fault: fault.then_some(Fault::ConvWeights),
    };
    let report = grad_check(&set, &[0], &params, &weights, &options)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    if !report.hinge_active {
        eprintln!("warning: triplet hinge inactive, its gradient path was not exercised");
    }
    println!("coordinates {}", report.checks.len());
    println!("max relative error {:e}", report.max_relative_error);
    if let Some(w) = &report.worst {
        println!(
            "worst {}[{}]: analytic {:e} numeric {:e}",
            w.tensor, w.index, w.analytic, w.numeric
        );
    }
    if report.max_relative_error < 1e-4 {
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "max relative error {:e} exceeds 1e-4",
            report.max_relative_error
        )))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { corpus } => validate(&corpus),
        Command::Train {
            corpus,
            vectors,
            out,
            options,
        } => cmd_train(&corpus, &vectors, &out, &options),
        Command::Embed {
            checkpoint,
            corpus,
            vectors,
            out,
            split,
            test_fraction,
            seed,
        } => cmd_embed(
            &checkpoint,
            &corpus,
            vectors.as_deref(),
            &out,
            split,
            test_fraction,
            seed,
        ),
        Command::Nearest {
            index,
            anchor,
            k,
            scope,
        } => {
            let index = load_index(&index)?;
            for (rank, n) in index.nearest(&anchor, scope, k)?.iter().enumerate() {
                println!("{}\t{}\t{:.17e}", rank + 1, n.chart_id, n.distance);
            }
            Ok(())
        }
        Command::Eval {
            index,
            gap2,
            gap3,
            format,
            baseline,
        } => cmd_eval(&index, Gaps { gap2, gap3 }, format, baseline),
        Command::Ablate {
            corpus,
            vectors,
            variants,
            gap2,
            gap3,
            options,
        } => cmd_ablate(&corpus, &vectors, &variants, Gaps { gap2, gap3 }, &options),
        Command::Gradcheck {
            seed,
            epsilon,
            coordinates,
            margin,
            inject_fault,
        } => cmd_gradcheck(seed, epsilon, coordinates, margin, inject_fault),
        Command::Grammar => {
            print!("{}", grammar_dump());
            Ok(())
        }
        Command::Import { input, format, out } => {
            let text = read_text(&input)?;
            let corpus = match format {
                ImportFormat::Calliope => import_calliope(&text).map_err(|e| CliError::Domain(e.to_string()))?,
            };
            write(&out, corpus.to_json())?;
            eprintln!(
                "imported {} visualizations, {} charts",
                corpus.visualizations.len(),
                corpus.chart_count()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Domain(m)) = &e;
            eprintln!("error: {m}");
            ExitCode::from(e.code())
        }
    }
}
