//! Context retrieval metrics.
//!
//! Each anchor retrieves its single nearest chart within the same dataset.
//! It counts for co-occurrence when that chart belongs to the same
//! visualization, and for top-k when additionally the positions differ by at
//! most the gap bound of k.

use crate::index::{EmbeddingIndex, Scope};
use crate::scalar::Scalar;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Gaps {
    pub gap2: usize,
    pub gap3: usize,
}

impl Default for Gaps {
    fn default() -> Self {
        Gaps { gap2: 2, gap3: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnchorRow {
    pub anchor: String,
    /// `None` when the dataset holds no other chart.
    pub retrieved: Option<String>,
    pub distance: Option<f64>,
    pub same_visualization: bool,
    pub gap: Option<usize>,
    pub top2: bool,
    pub top3: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub top2: f64,
    pub top3: f64,
    pub cooccurrence: f64,
    /// Anchors that could be scored.
    pub n_anchors: usize,
    /// Anchors without a same-dataset candidate, left out of every ratio.
    pub n_excluded: usize,
    pub gaps: Gaps,
    pub rows: Vec<AnchorRow>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("the index is empty")]
    Empty,
}

fn ratio(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

pub fn compute_metrics<T: Scalar>(index: &EmbeddingIndex<T>, gaps: Gaps) -> Result<MetricsReport, MetricsError> {
    if index.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut rows = Vec::with_capacity(index.len());
    for a in index.entries() {
        let Ok(hit) = index.nearest(&a.chart_id, Scope::SameDataset, 1) else {
            rows.push(AnchorRow {
                anchor: a.chart_id.clone(),
                retrieved: None,
                distance: None,
                same_visualization: false,
                gap: None,
                top2: false,
                top3: false,
            });
            continue;
        };
        let hit = &hit[0];
        let r = index.get(&hit.chart_id).expect("retrieved chart is indexed");
        let same = r.story_id == a.story_id;
        let gap = same.then(|| a.position.abs_diff(r.position));
        rows.push(AnchorRow {
            anchor: a.chart_id.clone(),
            retrieved: Some(hit.chart_id.clone()),
            distance: Some(hit.distance),
            same_visualization: same,
            gap,
            top2: gap.is_some_and(|g| g <= gaps.gap2),
            top3: gap.is_some_and(|g| g <= gaps.gap3),
        });
    }
    let scored: Vec<&AnchorRow> = rows.iter().filter(|r| r.retrieved.is_some()).collect();
    let n = scored.len();
    let count = |f: fn(&AnchorRow) -> bool| scored.iter().filter(|r| f(r)).count();
    Ok(MetricsReport {
        top2: ratio(count(|r| r.top2), n),
        top3: ratio(count(|r| r.top3), n),
        cooccurrence: ratio(count(|r| r.same_visualization), n),
        n_anchors: n,
        n_excluded: rows.len() - n,
        gaps,
        rows,
    })
}

/// Expected metrics when each anchor retrieves a uniformly random chart of
/// its dataset: per anchor, the share of candidates meeting each condition,
/// averaged over scorable anchors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RandomBaseline {
    pub top2: f64,
    pub top3: f64,
    pub cooccurrence: f64,
}

pub fn random_baseline<T: Scalar>(index: &EmbeddingIndex<T>, gaps: Gaps) -> RandomBaseline {
    let mut sums = [0.0; 3];
    let mut n = 0usize;
    for a in index.entries() {
        let candidates: Vec<_> = index
            .entries()
            .iter()
            .filter(|e| e.dataset_id == a.dataset_id && e.chart_id != a.chart_id)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        n += 1;
        let total = candidates.len() as f64;
        let same: Vec<usize> = candidates
            .iter()
            .filter(|e| e.story_id == a.story_id)
            .map(|e| e.position.abs_diff(a.position))
            .collect();
        sums[0] += same.iter().filter(|&&g| g <= gaps.gap2).count() as f64 / total;
        sums[1] += same.iter().filter(|&&g| g <= gaps.gap3).count() as f64 / total;
        sums[2] += same.len() as f64 / total;
    }
    let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
    RandomBaseline {
        top2: mean(sums[0]),
        top3: mean(sums[1]),
        cooccurrence: mean(sums[2]),
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned summary table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<14} {:>8}", "metric", "value").unwrap();
        for (name, v) in [
            (format!("top2 (gap<={})", self.gaps.gap2), self.top2),
            (format!("top3 (gap<={})", self.gaps.gap3), self.top3),
            ("cooccurrence".to_string(), self.cooccurrence),
        ] {
            writeln!(out, "{name:<14} {v:>8.4}").unwrap();
        }
        writeln!(out, "{:<14} {:>8}", "anchors", self.n_anchors).unwrap();
        writeln!(out, "{:<14} {:>8}", "excluded", self.n_excluded).unwrap();
        out
    }
}
