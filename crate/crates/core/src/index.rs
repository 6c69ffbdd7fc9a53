//! Embedding index and nearest-neighbour retrieval.

use crate::corpus::{encode_corpus, Corpus, CorpusError};
use crate::encoder::{forward_batch, EncoderError, EncoderParams, ForwardMode};
use crate::scalar::{euclidean, Scalar};
use crate::semantics::VectorStore;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry<T> {
    pub chart_id: String,
    pub story_id: String,
    /// One-based position within the story.
    pub position: usize,
    pub dataset_id: String,
    pub vector: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingIndex<T> {
    entries: Vec<IndexEntry<T>>,
    by_id: HashMap<String, usize>,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("unknown chart `{0}`")]
    UnknownAnchor(String),
    #[error("chart `{0}` has no candidates in scope")]
    NoCandidates(String),
    #[error("duplicate chart id `{0}`")]
    Duplicate(String),
    #[error("vector of chart `{chart}` has {found} values, index dimension is {expected}")]
    Dimension {
        chart: String,
        found: usize,
        expected: usize,
    },
    #[error("index file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scope {
    #[default]
    SameDataset,
    All,
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "same-dataset" => Ok(Scope::SameDataset),
            "all" => Ok(Scope::All),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub chart_id: String,
    pub distance: f64,
}

impl<T: Scalar> Default for EmbeddingIndex<T> {
    fn default() -> Self {
        EmbeddingIndex {
            entries: Vec::new(),
            by_id: HashMap::new(),
        }
    }
}

impl<T: Scalar> EmbeddingIndex<T> {
    pub fn from_entries(entries: Vec<IndexEntry<T>>) -> Result<Self, IndexError> {
        let mut index = Self::default();
        for e in entries {
            index.push(e)?;
        }
        Ok(index)
    }

    pub fn push(&mut self, entry: IndexEntry<T>) -> Result<(), IndexError> {
        if let Some(first) = self.entries.first() {
            if entry.vector.len() != first.vector.len() {
                return Err(IndexError::Dimension {
                    chart: entry.chart_id,
                    found: entry.vector.len(),
                    expected: first.vector.len(),
                });
            }
        }
        if self.by_id.contains_key(&entry.chart_id) {
            return Err(IndexError::Duplicate(entry.chart_id));
        }
        self.by_id.insert(entry.chart_id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[IndexEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.vector.len())
    }

    pub fn get(&self, chart_id: &str) -> Option<&IndexEntry<T>> {
        self.by_id.get(chart_id).map(|&i| &self.entries[i])
    }

    /// Candidates of `anchor` in scope ranked by ascending distance, ties by
    /// chart id. Returns at most `k` of them.
    pub fn nearest(&self, anchor: &str, scope: Scope, k: usize) -> Result<Vec<Neighbor>, IndexError> {
        let a = self
            .get(anchor)
            .ok_or_else(|| IndexError::UnknownAnchor(anchor.to_string()))?;
        let mut ranked: Vec<Neighbor> = self
            .entries
            .iter()
            .filter(|e| e.chart_id != a.chart_id && (scope == Scope::All || e.dataset_id == a.dataset_id))
            .map(|e| Neighbor {
                chart_id: e.chart_id.clone(),
                distance: euclidean(&a.vector, &e.vector).as_f64(),
            })
            .collect();
        if ranked.is_empty() {
            return Err(IndexError::NoCandidates(anchor.to_string()));
        }
        ranked.sort_by(|x, y| {
            x.distance
                .total_cmp(&y.distance)
                .then_with(|| x.chart_id.cmp(&y.chart_id))
        });
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Tab-separated text: a header, then one row per chart with every value
    /// printed with 17 significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("chart_id\tstory_id\tposition\tdataset_id");
        for i in 1..=self.dim().unwrap_or(0) {
            write!(out, "\tv{i}").unwrap();
        }
        out.push('\n');
        for e in &self.entries {
            write!(out, "{}\t{}\t{}\t{}", e.chart_id, e.story_id, e.position, e.dataset_id).unwrap();
            for v in &e.vector {
                write!(out, "\t{:.16e}", v.as_f64()).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, IndexError> {
        let bad = |line: usize, message: String| IndexError::Format { line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let columns: Vec<&str> = header.split('\t').collect();
        if columns.len() < 4 || columns[..4] != ["chart_id", "story_id", "position", "dataset_id"] {
            return Err(bad(
                1,
                "header must start with chart_id, story_id, position, dataset_id".into(),
            ));
        }
        let dim = columns.len() - 4;
        let mut index = Self::default();
        for (n, line) in lines {
            let line_no = n + 1;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != columns.len() {
                return Err(bad(
                    line_no,
                    format!("{} cells, header has {}", cells.len(), columns.len()),
                ));
            }
            let position = cells[2]
                .parse()
                .map_err(|_| bad(line_no, format!("invalid position `{}`", cells[2])))?;
            let vector = cells[4..]
                .iter()
                .map(|c| c.parse::<f64>().map(T::lit))
                .collect::<Result<Vec<T>, _>>()
                .map_err(|e| bad(line_no, format!("invalid value: {e}")))?;
            debug_assert_eq!(vector.len(), dim);
            index.push(IndexEntry {
                chart_id: cells[0].to_string(),
                story_id: cells[1].to_string(),
                position,
                dataset_id: cells[3].to_string(),
                vector,
            })?;
        }
        Ok(index)
    }
}

/// Charts per infer-mode forward call.
const EMBED_BATCH: usize = 256;

/// Infer-mode embeddings of every chart of `corpus`.
pub fn build_index<T: Scalar>(
    corpus: &Corpus,
    store: &VectorStore<T>,
    params: &EncoderParams<T>,
) -> Result<EmbeddingIndex<T>, IndexError> {
    params.config.validate()?;
    let encoded = encode_corpus(corpus, store, &params.config.semantic)?;
    let mut vectors = Vec::with_capacity(encoded.len());
    for chunk in encoded.chunks(EMBED_BATCH) {
        let refs: Vec<_> = chunk.iter().collect();
        let (out, _) = forward_batch(&refs, params, ForwardMode::Infer)?;
        vectors.extend(out.into_iter().map(|v| v.0));
    }
    let entries = corpus
        .charts()
        .zip(vectors)
        .map(|(c, vector)| IndexEntry {
            chart_id: c.entry.chart_id.clone(),
            story_id: c.vis.id.clone(),
            position: c.position,
            dataset_id: c.vis.dataset_id.clone(),
            vector,
        })
        .collect();
    EmbeddingIndex::from_entries(entries)
}
