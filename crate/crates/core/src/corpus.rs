//! Multi-view visualization corpora: loading, dataset-level splits and
//! training quadruples.

use crate::encoder::{encode_chart, EncodedChart};
use crate::fact::{string_enum, validate_fact, ChartFact};
use crate::grammar::GrammarError;
use crate::scalar::Scalar;
use crate::semantics::{SemanticLayout, VectorStore};
use crate::train::TrainingSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Fewest charts a visualization may hold.
pub const MIN_CHARTS: usize = 3;

string_enum! {
    pub enum Domain {
        Economy => "economy",
        Sports => "sports",
        Society => "society",
        Health => "health",
        Politics => "politics",
        Industry => "industry",
        Recreation => "recreation",
        Food => "food",
        Education => "education",
        Ecology => "ecology",
    }
}

string_enum! {
    pub enum VisKind {
        DataStory => "data-story",
        Dashboard => "dashboard",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartEntry {
    pub chart_id: String,
    pub fact: ChartFact,
}

/// A data story or dashboard. Charts keep their stored order; dashboards are
/// treated as ordered too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiViewVis {
    pub id: String,
    pub dataset_id: String,
    pub domain: Domain,
    pub kind: VisKind,
    pub charts: Vec<ChartEntry>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    pub visualizations: Vec<MultiViewVis>,
}

/// Where a chart sits in its corpus.
#[derive(Clone, Copy, Debug)]
pub struct ChartRef<'a> {
    pub vis: &'a MultiViewVis,
    /// One-based position within the visualization.
    pub position: usize,
    pub entry: &'a ChartEntry,
}

impl Corpus {
    pub fn chart_count(&self) -> usize {
        self.visualizations.iter().map(|v| v.charts.len()).sum()
    }

    /// Every chart in corpus order.
    pub fn charts(&self) -> impl Iterator<Item = ChartRef<'_>> {
        self.visualizations.iter().flat_map(|vis| {
            vis.charts.iter().enumerate().map(move |(i, entry)| ChartRef {
                vis,
                position: i + 1,
                entry,
            })
        })
    }

    /// Visualization indices per dataset, datasets in lexicographic order.
    pub fn datasets(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.visualizations.iter().enumerate() {
            map.entry(v.dataset_id.as_str()).or_default().push(i);
        }
        map
    }

    /// Positive windows: `Σ max(0, n − 2)` over visualizations.
    pub fn window_count(&self) -> usize {
        self.visualizations
            .iter()
            .map(|v| v.charts.len().saturating_sub(2))
            .sum()
    }

    fn subset(&self, keep: impl Fn(&MultiViewVis) -> bool) -> Corpus {
        Corpus {
            visualizations: self.visualizations.iter().filter(|v| keep(v)).cloned().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }
}

/// One problem with one chart or visualization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CorpusViolation {
    pub vis_id: String,
    /// One-based chart position; absent for visualization-level problems.
    pub position: Option<usize>,
    pub chart_id: Option<String>,
    pub message: String,
}

impl fmt::Display for CorpusViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "visualization={}", self.vis_id)?;
        if let Some(p) = self.position {
            write!(f, " position={p}")?;
        }
        if let Some(c) = &self.chart_id {
            write!(f, " chart={c}")?;
        }
        write!(f, " error={}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corpus does not match the schema: {0}")]
    Schema(String),
    #[error("{} invalid chart(s) or visualization(s)", .0.len())]
    Invalid(Vec<CorpusViolation>),
    #[error("chart id `{id}` appears in both `{first}` and `{second}`")]
    DuplicateChartId { id: String, first: String, second: String },
    #[error("visualization id `{0}` appears twice")]
    DuplicateVisId(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("corpus too small: {0}")]
    TooSmall(String),
    #[error("no eligible negative charts: every window's visualization is alone in the corpus")]
    NoNegatives,
    #[error("chart `{chart}` cannot be encoded: {source}")]
    Encode { chart: String, source: GrammarError },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoadMode {
    /// Any invalid chart rejects the corpus.
    #[default]
    Strict,
    /// Invalid charts, and visualizations left too short, are dropped.
    Lenient,
}

#[derive(Clone, Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    /// Dropped items (lenient mode only).
    pub warnings: Vec<CorpusViolation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChart {
    chart_id: String,
    fact: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVis {
    id: String,
    dataset_id: String,
    domain: Domain,
    kind: VisKind,
    charts: Vec<RawChart>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    visualizations: Vec<RawVis>,
}

/// Parses and validates a corpus document.
pub fn parse_corpus(text: &str, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let raw: RawCorpus = serde_json::from_str(text).map_err(|e| CorpusError::Schema(e.to_string()))?;
    let mut problems = Vec::new();
    let mut visualizations = Vec::new();
    let mut vis_ids = HashSet::new();
    let mut owners: HashMap<String, String> = HashMap::new();
    for rv in raw.visualizations {
        if !vis_ids.insert(rv.id.clone()) {
            return Err(CorpusError::DuplicateVisId(rv.id));
        }
        let mut charts = Vec::new();
        for (i, rc) in rv.charts.into_iter().enumerate() {
            if let Some(first) = owners.insert(rc.chart_id.clone(), rv.id.clone()) {
                return Err(CorpusError::DuplicateChartId {
                    id: rc.chart_id,
                    first,
                    second: rv.id,
                });
            }
            let violation = |message: String| CorpusViolation {
                vis_id: rv.id.clone(),
                position: Some(i + 1),
                chart_id: Some(rc.chart_id.clone()),
                message,
            };
            let fact: ChartFact = match serde_json::from_value(rc.fact) {
                Ok(f) => f,
                Err(e) => {
                    problems.push(violation(e.to_string()));
                    continue;
                }
            };
            let report = validate_fact(&fact);
            if !report.is_valid() {
                problems.extend(report.violations.iter().map(|v| violation(v.to_string())));
                continue;
            }
            charts.push(ChartEntry {
                chart_id: rc.chart_id,
                fact,
            });
        }
        if charts.len() < MIN_CHARTS {
            problems.push(CorpusViolation {
                vis_id: rv.id.clone(),
                position: None,
                chart_id: None,
                message: format!(
                    "minimum chart number is {MIN_CHARTS}, found {} valid chart(s)",
                    charts.len()
                ),
            });
            continue;
        }
        visualizations.push(MultiViewVis {
            id: rv.id,
            dataset_id: rv.dataset_id,
            domain: rv.domain,
            kind: rv.kind,
            charts,
        });
    }
    match mode {
        LoadMode::Strict if !problems.is_empty() => Err(CorpusError::Invalid(problems)),
        _ => Ok(LoadedCorpus {
            corpus: Corpus { visualizations },
            warnings: problems,
        }),
    }
}

pub fn load_corpus(path: impl AsRef<Path>, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, mode)
}

/// Splits by dataset so that no dataset spans both sides.
///
/// Datasets are visited in a seeded random order and moved to the test side
/// while they fit within `round(test_fraction · visualizations)`. If nothing
/// fits, the first visited dataset goes to test; if everything went to test,
/// the last one moved returns to train. Both sides keep at least one dataset.
pub fn split_corpus(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidArgument(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let datasets = corpus.datasets();
    if datasets.len() < 2 {
        return Err(CorpusError::TooSmall(format!(
            "a dataset-level split needs at least 2 datasets, found {}",
            datasets.len()
        )));
    }
    let mut order: Vec<(&str, usize)> = datasets.iter().map(|(d, v)| (*d, v.len())).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = (test_fraction * corpus.visualizations.len() as f64).round() as usize;
    let mut test: Vec<&str> = Vec::new();
    let mut filled = 0;
    for &(d, n) in &order {
        if filled + n <= target {
            test.push(d);
            filled += n;
        }
    }
    if test.is_empty() {
        test.push(order[0].0);
    }
    if test.len() == order.len() {
        test.pop();
    }
    let test: HashSet<&str> = test.into_iter().collect();
    Ok((
        corpus.subset(|v| !test.contains(v.dataset_id.as_str())),
        corpus.subset(|v| test.contains(v.dataset_id.as_str())),
    ))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegativePolicy {
    /// Other visualizations of the same dataset, else of the same domain, else any.
    #[default]
    SameDatasetFirst,
    Any,
}

impl std::str::FromStr for NegativePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "same-dataset-first" => Ok(NegativePolicy::SameDatasetFirst),
            "any" => Ok(NegativePolicy::Any),
            other => Err(format!("unknown negative policy `{other}`")),
        }
    }
}

string_enum! {
    pub enum NegativeTier {
        SameDataset => "same-dataset",
        SameDomain => "same-domain",
        Any => "any",
    }
}

/// One training quadruple by chart id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SampleRef {
    pub prev: String,
    pub mid: String,
    pub next: String,
    pub negative: String,
    pub vis_id: String,
    pub tier: NegativeTier,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<SampleRef>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Encodes every chart of `corpus` once and indexes the samples into it.
    pub fn resolve<T: Scalar>(
        &self,
        corpus: &Corpus,
        store: &VectorStore<T>,
        layout: &SemanticLayout,
    ) -> Result<TrainingSet<T>, CorpusError> {
        let charts = encode_corpus(corpus, store, layout)?;
        let index: HashMap<&str, usize> = corpus
            .charts()
            .enumerate()
            .map(|(i, c)| (c.entry.chart_id.as_str(), i))
            .collect();
        let find = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| CorpusError::InvalidArgument(format!("sample references unknown chart `{id}`")))
        };
        let samples = self
            .samples
            .iter()
            .map(|s| Ok([find(&s.prev)?, find(&s.mid)?, find(&s.next)?, find(&s.negative)?]))
            .collect::<Result<_, CorpusError>>()?;
        Ok(TrainingSet { charts, samples })
    }
}

/// Network inputs of every chart, in corpus order.
pub fn encode_corpus<T: Scalar>(
    corpus: &Corpus,
    store: &VectorStore<T>,
    layout: &SemanticLayout,
) -> Result<Vec<EncodedChart<T>>, CorpusError> {
    corpus
        .charts()
        .map(|c| {
            encode_chart(&c.entry.fact, store, layout).map_err(|source| CorpusError::Encode {
                chart: c.entry.chart_id.clone(),
                source,
            })
        })
        .collect()
}

/// Windows of three consecutive charts, each paired with negatives drawn
/// from other visualizations. Duplicate quadruples are dropped, not redrawn.
pub fn build_samples(
    train: &Corpus,
    negatives_per_window: usize,
    policy: NegativePolicy,
    seed: u64,
) -> Result<SampleSet, CorpusError> {
    if train.visualizations.is_empty() {
        return Err(CorpusError::TooSmall("training corpus is empty".into()));
    }
    if negatives_per_window == 0 {
        return Err(CorpusError::InvalidArgument(
            "negatives per window must be positive".into(),
        ));
    }
    let vis = &train.visualizations;
    let pool = |keep: &dyn Fn(&MultiViewVis) -> bool, own: usize| -> Vec<&str> {
        vis.iter()
            .enumerate()
            .filter(|&(j, v)| j != own && keep(v))
            .flat_map(|(_, v)| v.charts.iter().map(|c| c.chart_id.as_str()))
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, v) in vis.iter().enumerate() {
        if v.charts.len() < 3 {
            continue;
        }
        let tiers = [
            (NegativeTier::SameDataset, pool(&|o| o.dataset_id == v.dataset_id, i)),
            (NegativeTier::SameDomain, pool(&|o| o.domain == v.domain, i)),
            (NegativeTier::Any, pool(&|_| true, i)),
        ];
        let (tier, candidates) = match policy {
            NegativePolicy::SameDatasetFirst => tiers.iter().find(|(_, c)| !c.is_empty()),
            NegativePolicy::Any => tiers.last().filter(|(_, c)| !c.is_empty()),
        }
        .ok_or(CorpusError::NoNegatives)?;
        for w in v.charts.windows(3) {
            for _ in 0..negatives_per_window {
                let negative = candidates[rng.random_range(0..candidates.len())];
                let s = SampleRef {
                    prev: w[0].chart_id.clone(),
                    mid: w[1].chart_id.clone(),
                    next: w[2].chart_id.clone(),
                    negative: negative.to_string(),
                    vis_id: v.id.clone(),
                    tier: *tier,
                };
                let key = [s.prev.clone(), s.mid.clone(), s.next.clone(), s.negative.clone()];
                if seen.insert(key) {
                    samples.push(s);
                }
            }
        }
    }
    Ok(SampleSet { samples })
}
