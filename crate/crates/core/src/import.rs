//! One-shot conversion of Calliope-style story exports into the corpus layout.
//!
//! Expected input, a JSON array of stories:
//!
//! ```text
//! [{"id": "...", "dataset": "...", "domain": "economy", "kind": "data-story",
//!   "schema": [{"field": "Year", "type": "temporal"}, ...],
//!   "facts": [{"chart": "line chart", "type": "trend",
//!              "subspace": [{"field": "...", "value": "..."}],
//!              "breakdown": ["Year"], "measure": [{"field": "...", "aggregate": "sum"}],
//!              "focus": [{"field": "...", "value": "..."}], "parameter": ...}]}]
//! ```
//!
//! Field types come from the story schema (categorical when undeclared).
//! Meta is derived from `parameter`: a trend direction string, a signed
//! difference or correlation, a category list, ranked values, or `max`/`min`.
//! `kind` defaults to `data-story`; chart ids are `<story id>-<position>`.

use crate::corpus::{ChartEntry, Corpus, Domain, MultiViewVis, VisKind};
use crate::fact::{
    Aggregation, AssociationSign, ChartFact, ChartType, DifferenceRelation, ExtremeKind, FactType, FieldRef, FieldType,
    Filter, Focus, MeasureSpec, MetaInfo, TrendDirection, MAX_FILTERS,
};
use serde::Deserialize;
use serde_json::Value;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("input is not a story export: {0}")]
    Format(String),
    #[error("story `{story}`, fact {position}: {message}")]
    Fact {
        story: String,
        position: usize,
        message: String,
    },
}

#[derive(Deserialize)]
struct FieldDecl {
    field: String,
    #[serde(rename = "type")]
    field_type: String,
}

#[derive(Deserialize)]
struct FieldValue {
    field: String,
    value: Value,
}

#[derive(Deserialize)]
struct MeasureDecl {
    #[serde(default)]
    field: String,
    #[serde(default = "count")]
    aggregate: String,
}

fn count() -> String {
    "count".into()
}

#[derive(Deserialize)]
struct CalliopeFact {
    chart: String,
    #[serde(rename = "type")]
    fact_type: String,
    #[serde(default)]
    subspace: Vec<FieldValue>,
    #[serde(default)]
    breakdown: Vec<String>,
    #[serde(default)]
    measure: Vec<MeasureDecl>,
    #[serde(default)]
    focus: Vec<FieldValue>,
    #[serde(default)]
    parameter: Value,
}

#[derive(Deserialize)]
struct CalliopeStory {
    id: String,
    dataset: String,
    domain: String,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    schema: Vec<FieldDecl>,
    facts: Vec<CalliopeFact>,
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn aggregation(name: &str) -> Result<Aggregation, String> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "count" => Aggregation::Count,
        "sum" => Aggregation::Sum,
        "avg" | "average" | "mean" => Aggregation::Average,
        "min" | "minimum" => Aggregation::Minimum,
        "max" | "maximum" => Aggregation::Maximum,
        other => return Err(format!("unknown aggregate `{other}`")),
    })
}

fn meta(fact_type: FactType, p: &Value) -> Result<MetaInfo, String> {
    let num = p.as_f64().or_else(|| p.as_str().and_then(|s| s.parse().ok()));
    Ok(match fact_type {
        FactType::Trend => match p.as_str().map(|s| s.to_ascii_lowercase()) {
            Some(s) if s.starts_with("increas") => MetaInfo::Trend {
                direction: TrendDirection::Increasing,
            },
            Some(s) if s.starts_with("decreas") => MetaInfo::Trend {
                direction: TrendDirection::Decreasing,
            },
            Some(_) => MetaInfo::Trend {
                direction: TrendDirection::NoTrend,
            },
            None => MetaInfo::None,
        },
        FactType::Categorization => match p.as_array() {
            Some(a) if !a.is_empty() => MetaInfo::Categorization { count: a.len() as u32 },
            _ => match num {
                Some(n) if n >= 1.0 => MetaInfo::Categorization { count: n as u32 },
                _ => MetaInfo::None,
            },
        },
        FactType::Difference => match num {
            Some(n) => MetaInfo::Difference {
                relation: if n < 0.0 {
                    DifferenceRelation::Lower
                } else {
                    DifferenceRelation::Higher
                },
            },
            None => MetaInfo::None,
        },
        FactType::Association => match num {
            Some(n) => MetaInfo::Association {
                sign: if n < 0.0 {
                    AssociationSign::Negative
                } else {
                    AssociationSign::Positive
                },
            },
            None => MetaInfo::None,
        },
        FactType::Rank => match p.as_array() {
            Some(a) if !a.is_empty() => MetaInfo::Rank {
                top3: a.iter().take(3).map(text).collect(),
            },
            _ => MetaInfo::None,
        },
        FactType::Extreme => match p.as_str().map(|s| s.to_ascii_lowercase()) {
            Some(s) if s.starts_with("max") => MetaInfo::Extreme {
                extreme: ExtremeKind::Max,
            },
            Some(s) if s.starts_with("min") => MetaInfo::Extreme {
                extreme: ExtremeKind::Min,
            },
            _ => MetaInfo::None,
        },
        _ => MetaInfo::None,
    })
}

fn convert_fact(f: &CalliopeFact, types: &HashMap<&str, FieldType>) -> Result<ChartFact, String> {
    let type_of = |field: &str| types.get(field).copied().unwrap_or(FieldType::Categorical);
    let type_c: ChartType = f.chart.to_ascii_lowercase().parse()?;
    let type_f: FactType = f.fact_type.to_ascii_lowercase().parse()?;
    if f.subspace.len() > MAX_FILTERS {
        return Err(format!("{} filters, at most {MAX_FILTERS} supported", f.subspace.len()));
    }
    let subspace = f
        .subspace
        .iter()
        .map(|s| Filter {
            field: s.field.clone(),
            value: text(&s.value),
            field_type: type_of(&s.field),
        })
        .collect();
    let breakdown = f.breakdown.first().map(|b| FieldRef {
        field: b.clone(),
        field_type: type_of(b),
    });
    let measure = match f.measure.first() {
        Some(m) => Some(MeasureSpec {
            field: m.field.clone(),
            aggregation: aggregation(&m.aggregate)?,
        }),
        None => None,
    };
    let focus = f.focus.first().map(|x| Focus {
        field: x.field.clone(),
        field_type: type_of(&x.field),
        value: text(&x.value),
    });
    Ok(ChartFact {
        type_c,
        type_f,
        subspace,
        breakdown,
        measure,
        focus,
        meta: meta(type_f, &f.parameter)?,
    })
}

pub fn import_calliope(text: &str) -> Result<Corpus, ImportError> {
    let stories: Vec<CalliopeStory> = serde_json::from_str(text).map_err(|e| ImportError::Format(e.to_string()))?;
    let mut visualizations = Vec::with_capacity(stories.len());
    for s in stories {
        let mut types = HashMap::new();
        for d in &s.schema {
            let t: FieldType = d.field_type.to_ascii_lowercase().parse().map_err(ImportError::Format)?;
            types.insert(d.field.as_str(), t);
        }
        let domain: Domain = s.domain.to_ascii_lowercase().parse().map_err(ImportError::Format)?;
        let kind: VisKind = match &s.kind {
            Some(k) => k.parse().map_err(ImportError::Format)?,
            None => VisKind::DataStory,
        };
        let charts = s
            .facts
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let fact = convert_fact(f, &types).map_err(|message| ImportError::Fact {
                    story: s.id.clone(),
                    position: i + 1,
                    message,
                })?;
                Ok(ChartEntry {
                    chart_id: format!("{}-{}", s.id, i + 1),
                    fact,
                })
            })
            .collect::<Result<_, ImportError>>()?;
        visualizations.push(MultiViewVis {
            id: s.id,
            dataset_id: s.dataset,
            domain,
            kind,
            charts,
        });
    }
    Ok(Corpus { visualizations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact::validate_fact;

    const STORY: &str = r#"[{"id":"s1","dataset":"pop","domain":"Society",
        "schema":[{"field":"Year","type":"temporal"},{"field":"City","type":"geographical"},
                  {"field":"Population","type":"numerical"}],
        "facts":[
          {"chart":"line chart","type":"trend","breakdown":["Year"],
           "measure":[{"field":"Population","aggregate":"sum"}],"parameter":"increasing"},
          {"chart":"vertical bar chart","type":"difference","subspace":[{"field":"City","value":"Guizhou"}],
           "breakdown":["Year"],"measure":[{"field":"Population","aggregate":"avg"}],"parameter":-12.5},
          {"chart":"table","type":"rank","breakdown":["Region"],"parameter":["A","B","C","D"]}
        ]}]"#;

    #[test]
    fn converts_story() {
        let c = import_calliope(STORY).unwrap();
        let v = &c.visualizations[0];
        assert_eq!((v.domain, v.kind), (Domain::Society, VisKind::DataStory));
        assert_eq!(v.charts[1].chart_id, "s1-2");
        let f = &v.charts[1].fact;
        assert_eq!(f.subspace[0].field_type, FieldType::Geographical);
        assert_eq!(f.measure.as_ref().unwrap().aggregation, Aggregation::Average);
        assert_eq!(
            f.meta,
            MetaInfo::Difference {
                relation: DifferenceRelation::Lower
            }
        );
        assert_eq!(
            v.charts[2].fact.meta,
            MetaInfo::Rank {
                top3: vec!["A".into(), "B".into(), "C".into()]
            }
        );
        for ch in &v.charts {
            assert!(validate_fact(&ch.fact).is_valid());
        }
    }

    #[test]
    fn reports_bad_fact_position() {
        let bad = STORY.replace("\"table\"", "\"sunburst\"");
        match import_calliope(&bad) {
            Err(ImportError::Fact { story, position, .. }) => assert_eq!((story.as_str(), position), ("s1", 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(import_calliope("{}"), Err(ImportError::Format(_))));
    }
}
