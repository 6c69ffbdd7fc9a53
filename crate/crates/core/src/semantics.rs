//! Fact semantics: location-tagged words, pretrained word vectors, per-word
//! pooling and the fixed-size semantic block fed to the encoder.

use crate::fact::ChartFact;
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

/// Width of the pretrained word vectors.
pub const EMBEDDING_DIM: usize = 100;
/// Averaging window of the per-word pooling.
pub const POOL_WINDOW: usize = 10;
pub const POOLED_DIM: usize = EMBEDDING_DIM / POOL_WINDOW;
/// Word slots in the semantic block.
pub const MAX_TOKENS: usize = 25;
pub const LOCATION_COUNT: usize = 7;

/// Where in the fact a word was found.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    SubspaceField = 1,
    SubspaceValue = 2,
    BreakdownField = 3,
    MeasureField = 4,
    FocusField = 5,
    FocusValue = 6,
    Meta = 7,
}

impl Location {
    /// 1-based location number.
    pub fn number(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub word: String,
    pub location: Location,
}

/// Splits a field string into words.
///
/// Separators are whitespace, `_`, `-` and `/`; camelCase boundaries also
/// split (`studentCount` → `student`, `Count`; `GDPGrowth` → `GDP`, `Growth`).
/// Any other punctuation is dropped. Digit runs are kept.
pub fn split_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split(|c: char| c.is_whitespace() || matches!(c, '_' | '-' | '/')) {
        let chars: Vec<char> = chunk.chars().filter(|c| c.is_alphanumeric()).collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_uppercase() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                if prev.is_lowercase() || (prev.is_uppercase() && next_lower) {
                    words.push(std::mem::take(&mut current));
                }
            }
            current.push(c);
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

/// Words of the seven semantic locations, in location order. The chart and
/// fact types never contribute tokens.
pub fn extract_tokens(fact: &ChartFact) -> Vec<Token> {
    let mut sources: Vec<(Location, &str)> = Vec::new();
    for f in &fact.subspace {
        sources.push((Location::SubspaceField, &f.field));
    }
    for f in &fact.subspace {
        sources.push((Location::SubspaceValue, &f.value));
    }
    if let Some(b) = &fact.breakdown {
        sources.push((Location::BreakdownField, &b.field));
    }
    if let Some(m) = &fact.measure {
        sources.push((Location::MeasureField, &m.field));
    }
    if let Some(f) = &fact.focus {
        sources.push((Location::FocusField, &f.field));
        sources.push((Location::FocusValue, &f.value));
    }
    let meta_text = fact.meta.text();
    for t in &meta_text {
        sources.push((Location::Meta, t));
    }
    sources
        .into_iter()
        .flat_map(|(location, text)| split_words(text).into_iter().map(move |word| Token { word, location }))
        .collect()
}

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("cannot read vector store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vector store line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("vector store dimension is {found}, expected {EMBEDDING_DIM}")]
    Dimension { found: usize },
}

/// Pretrained word vectors keyed by lowercase word.
#[derive(Clone, Debug, Default)]
pub struct VectorStore<T> {
    vectors: HashMap<String, Vec<T>>,
}

impl<T: Scalar> VectorStore<T> {
    pub fn new() -> Self {
        VectorStore {
            vectors: HashMap::new(),
        }
    }

    /// Adds a vector unless the (case-folded) word is already present.
    pub fn insert(&mut self, word: &str, vector: Vec<T>) -> Result<(), SemanticsError> {
        if vector.len() != EMBEDDING_DIM {
            return Err(SemanticsError::Dimension { found: vector.len() });
        }
        self.vectors.entry(word.to_lowercase()).or_insert(vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(&word.to_lowercase())
    }

    /// Reads the text layout `word v1 .. v100`, one entry per line.
    ///
    /// A leading `count dim` header line is accepted. Words may contain
    /// spaces: the last 100 fields of a line are the components.
    pub fn from_reader(reader: impl BufRead) -> Result<Self, SemanticsError> {
        let mut store = VectorStore::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| SemanticsError::Format {
                line: lineno,
                message: e.to_string(),
            })?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
                let dim: usize = fields[1].parse().unwrap();
                if dim != EMBEDDING_DIM {
                    return Err(SemanticsError::Dimension { found: dim });
                }
                continue;
            }
            if fields.len() < EMBEDDING_DIM + 1 {
                return Err(
                    if fields.len() >= 2 && fields[1..].iter().all(|f| f.parse::<f64>().is_ok()) {
                        SemanticsError::Dimension {
                            found: fields.len() - 1,
                        }
                    } else {
                        SemanticsError::Format {
                            line: lineno,
                            message: format!("expected a word and {EMBEDDING_DIM} numbers"),
                        }
                    },
                );
            }
            let split = fields.len() - EMBEDDING_DIM;
            let word = fields[..split].join(" ");
            let mut vector = Vec::with_capacity(EMBEDDING_DIM);
            for f in &fields[split..] {
                let v: f64 = f.parse().map_err(|_| SemanticsError::Format {
                    line: lineno,
                    message: format!("`{f}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(SemanticsError::Format {
                        line: lineno,
                        message: format!("non-finite component `{f}`"),
                    });
                }
                vector.push(T::lit(v));
            }
            store.insert(&word, vector)?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SemanticsError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| SemanticsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// Case-insensitive lookup. Unknown words get [`oov_vector`].
    pub fn lookup(&self, word: &str) -> Vec<T> {
        let key = word.to_lowercase();
        match self.vectors.get(&key) {
            Some(v) => v.clone(),
            None => oov_vector(&key),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Unit vector seeded by the lowercase word's bytes; identical across runs
/// and platforms.
pub fn oov_vector<T: Scalar>(word: &str) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.to_lowercase().as_bytes()));
    let raw: Vec<f64> = (0..EMBEDDING_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| T::lit(v / norm)).collect()
}

/// Mean of each consecutive window of ten components.
pub fn pool_word<T: Scalar>(v: &[T]) -> Vec<T> {
    let n = T::lit(POOL_WINDOW as f64);
    v.chunks(POOL_WINDOW)
        .map(|w| w.iter().copied().sum::<T>() / n)
        .collect()
}

/// Maximum of each consecutive window of ten components.
pub fn max_pool_word<T: Scalar>(v: &[T]) -> Vec<T> {
    v.chunks(POOL_WINDOW)
        .map(|w| w.iter().copied().fold(T::neg_infinity(), T::max))
        .collect()
}

/// How word vectors are reduced before fusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    /// Each word averaged in windows of ten (100 → 10).
    #[default]
    WordAvg,
    /// Raw 100-dim word vectors.
    None,
    /// Each word max-pooled in windows of ten.
    WordMax,
    /// Element-wise mean over all words, one 100-dim slot.
    WordsAvg,
    /// Element-wise max over all words, one 100-dim slot.
    WordsMax,
}

impl PoolingMode {
    pub const ALL: [PoolingMode; 5] = [
        PoolingMode::WordAvg,
        PoolingMode::None,
        PoolingMode::WordMax,
        PoolingMode::WordsAvg,
        PoolingMode::WordsMax,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

/// Shape of the semantic block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticLayout {
    pub pooling: PoolingMode,
    /// When false the location one-hot columns are present but zero.
    pub location_markers: bool,
}

impl Default for SemanticLayout {
    fn default() -> Self {
        SemanticLayout {
            pooling: PoolingMode::WordAvg,
            location_markers: true,
        }
    }
}

impl SemanticLayout {
    pub fn slots(&self) -> usize {
        match self.pooling {
            PoolingMode::WordsAvg | PoolingMode::WordsMax => 1,
            _ => MAX_TOKENS,
        }
    }

    pub fn word_width(&self) -> usize {
        match self.pooling {
            PoolingMode::WordAvg | PoolingMode::WordMax => POOLED_DIM,
            _ => EMBEDDING_DIM,
        }
    }

    pub fn width(&self) -> usize {
        self.word_width() + LOCATION_COUNT
    }

    /// Flattened length: 25 × 17 = 425 by default.
    pub fn len(&self) -> usize {
        self.slots() * self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major `slots × width` block; each row is a word feature followed by
/// its location one-hot. Padding rows are zero and follow the real rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticBlock<T> {
    pub slots: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> SemanticBlock<T> {
    pub fn zeros(layout: &SemanticLayout) -> Self {
        SemanticBlock {
            slots: layout.slots(),
            width: layout.width(),
            data: vec![T::zero(); layout.len()],
        }
    }

    pub fn row(&self, slot: usize) -> &[T] {
        &self.data[slot * self.width..(slot + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

fn location_onehot<T: Scalar>(location: Location, enabled: bool) -> [T; LOCATION_COUNT] {
    let mut out = [T::zero(); LOCATION_COUNT];
    if enabled {
        out[location.number() - 1] = T::one();
    }
    out
}

/// Encodes the first 25 tokens; later tokens are dropped.
pub fn build_semantic_block<T: Scalar>(
    tokens: &[Token],
    store: &VectorStore<T>,
    layout: &SemanticLayout,
) -> SemanticBlock<T> {
    let mut block = SemanticBlock::zeros(layout);
    let kept = &tokens[..tokens.len().min(MAX_TOKENS)];
    let width = block.width;
    match layout.pooling {
        PoolingMode::WordAvg | PoolingMode::WordMax | PoolingMode::None => {
            for (slot, tok) in kept.iter().enumerate() {
                let v = store.lookup(&tok.word);
                let feature = match layout.pooling {
                    PoolingMode::WordAvg => pool_word(&v),
                    PoolingMode::WordMax => max_pool_word(&v),
                    _ => v,
                };
                let row = &mut block.data[slot * width..(slot + 1) * width];
                row[..feature.len()].copy_from_slice(&feature);
                row[feature.len()..].copy_from_slice(&location_onehot(tok.location, layout.location_markers));
            }
        }
        PoolingMode::WordsAvg | PoolingMode::WordsMax => {
            if kept.is_empty() {
                return block;
            }
            let rows: Vec<Vec<T>> = kept
                .iter()
                .map(|tok| {
                    let mut r = store.lookup(&tok.word);
                    r.extend(location_onehot::<T>(tok.location, layout.location_markers));
                    r
                })
                .collect();
            let n = T::lit(rows.len() as f64);
            for (j, out) in block.data.iter_mut().enumerate() {
                let column = rows.iter().map(|r| r[j]);
                *out = if layout.pooling == PoolingMode::WordsAvg {
                    column.sum::<T>() / n
                } else {
                    column.fold(T::neg_infinity(), T::max)
                };
            }
        }
    }
    block
}
