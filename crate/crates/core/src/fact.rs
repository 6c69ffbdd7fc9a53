//! The seven-part chart fact: chart type, fact type, subspace, breakdown,
//! measure, focus and meta.
//!
//! Facts are plain immutable values. [`validate_fact`] reports every broken
//! invariant as data; [`parse_fact_json`] and [`serialize_fact`] implement the
//! corpus JSON layout with a canonical key order.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Maximum number of subspace filters a fact may carry.
pub const MAX_FILTERS: usize = 3;

macro_rules! string_enum {
    (
        $(#[$meta:meta])*
        pub enum $name:ident { $($variant:ident => $text:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            /// Zero-based position in [`Self::ALL`].
            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{}`", stringify!($name), other)),
                }
            }
        }
    };
}

pub(crate) use string_enum;

string_enum! {
    pub enum FieldType {
        Temporal => "temporal",
        Numerical => "numerical",
        Categorical => "categorical",
        Geographical => "geographical",
    }
}

string_enum! {
    pub enum ChartType {
        VerticalBar => "vertical bar chart",
        HorizontalBar => "horizontal bar chart",
        GroupedBar => "grouped bar chart",
        StackedBar => "stacked bar chart",
        Line => "line chart",
        Area => "area chart",
        Pie => "pie chart",
        Donut => "donut chart",
        Scatter => "scatter plot",
        Bubble => "bubble chart",
        Treemap => "treemap",
        Map => "map",
        RadialBar => "radial bar chart",
        Progress => "progress chart",
        Table => "table",
    }
}

string_enum! {
    pub enum FactType {
        Trend => "trend",
        Categorization => "categorization",
        Difference => "difference",
        Rank => "rank",
        Extreme => "extreme",
        Association => "association",
        Proportion => "proportion",
        Distribution => "distribution",
        Outlier => "outlier",
        Value => "value",
    }
}

string_enum! {
    pub enum Aggregation {
        Count => "count",
        Sum => "sum",
        Average => "average",
        Minimum => "minimum",
        Maximum => "maximum",
    }
}

string_enum! {
    pub enum TrendDirection {
        Increasing => "increasing",
        Decreasing => "decreasing",
        NoTrend => "no-trend",
    }
}

string_enum! {
    pub enum DifferenceRelation {
        Lower => "lower",
        Higher => "higher",
    }
}

string_enum! {
    pub enum ExtremeKind {
        Max => "max",
        Min => "min",
    }
}

string_enum! {
    pub enum AssociationSign {
        Positive => "positive",
        Negative => "negative",
    }
}

/// One `field = value` data filter of the subspace.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    pub field: String,
    pub value: String,
    pub field_type: FieldType,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRef {
    pub field: String,
    pub field_type: FieldType,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    /// May be empty for `count`.
    #[serde(default)]
    pub field: String,
    pub aggregation: Aggregation,
}

/// The highlighted data item: a field together with one of its values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Focus {
    pub field: String,
    pub field_type: FieldType,
    pub value: String,
}

impl Focus {
    pub fn field_ref(&self) -> FieldRef {
        FieldRef {
            field: self.field.clone(),
            field_type: self.field_type,
        }
    }
}

/// Fact-type specific annotation. `None` is legal for every fact type.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MetaInfo {
    #[default]
    None,
    Trend {
        direction: TrendDirection,
    },
    Categorization {
        count: u32,
    },
    Difference {
        relation: DifferenceRelation,
    },
    Rank {
        top3: Vec<String>,
    },
    Extreme {
        extreme: ExtremeKind,
    },
    Association {
        sign: AssociationSign,
    },
}

impl MetaInfo {
    /// The fact type this meta variant belongs to, or `None` for the empty meta.
    pub fn fact_type(&self) -> Option<FactType> {
        match self {
            MetaInfo::None => None,
            MetaInfo::Trend { .. } => Some(FactType::Trend),
            MetaInfo::Categorization { .. } => Some(FactType::Categorization),
            MetaInfo::Difference { .. } => Some(FactType::Difference),
            MetaInfo::Rank { .. } => Some(FactType::Rank),
            MetaInfo::Extreme { .. } => Some(FactType::Extreme),
            MetaInfo::Association { .. } => Some(FactType::Association),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MetaInfo::None => "none",
            MetaInfo::Trend { .. } => "trend",
            MetaInfo::Categorization { .. } => "categorization",
            MetaInfo::Difference { .. } => "difference",
            MetaInfo::Rank { .. } => "rank",
            MetaInfo::Extreme { .. } => "extreme",
            MetaInfo::Association { .. } => "association",
        }
    }

    /// Text the meta contributes to the fact semantics.
    pub fn text(&self) -> Vec<String> {
        match self {
            MetaInfo::None => Vec::new(),
            MetaInfo::Trend { direction } => vec![match direction {
                TrendDirection::NoTrend => "no trend".to_string(),
                d => d.as_str().to_string(),
            }],
            MetaInfo::Categorization { count } => vec![format!("{count} categories")],
            MetaInfo::Difference { relation } => vec![relation.as_str().to_string()],
            MetaInfo::Rank { top3 } => top3.clone(),
            MetaInfo::Extreme { extreme } => vec![extreme.as_str().to_string()],
            MetaInfo::Association { sign } => vec![sign.as_str().to_string()],
        }
    }
}

/// Whether `meta` may annotate a fact of type `fact_type`.
pub fn meta_compatible(fact_type: FactType, meta: &MetaInfo) -> bool {
    match meta.fact_type() {
        None => true,
        Some(ft) => ft == fact_type,
    }
}

/// Declarative description of one chart.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartFact {
    pub type_c: ChartType,
    pub type_f: FactType,
    #[serde(default)]
    pub subspace: Vec<Filter>,
    #[serde(default)]
    pub breakdown: Option<FieldRef>,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub focus: Option<Focus>,
    #[serde(default, with = "nullable_meta")]
    pub meta: MetaInfo,
}

impl ChartFact {
    /// A fact with every optional component absent.
    pub fn minimal(type_c: ChartType, type_f: FactType) -> Self {
        ChartFact {
            type_c,
            type_f,
            subspace: Vec::new(),
            breakdown: None,
            measure: None,
            focus: None,
            meta: MetaInfo::None,
        }
    }
}

/// `null` and a missing key both mean [`MetaInfo::None`]; `None` serializes as `null`.
mod nullable_meta {
    use super::MetaInfo;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(meta: &MetaInfo, s: S) -> Result<S::Ok, S::Error> {
        match meta {
            MetaInfo::None => s.serialize_none(),
            other => other.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<MetaInfo, D::Error> {
        Ok(Option::<MetaInfo>::deserialize(d)?.unwrap_or_default())
    }
}

/// One broken invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Offending component, e.g. `breakdown.field_type` or `subspace[1].value`.
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, rule: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            rule: rule.into(),
        });
    }
}

pub const RULE_META_INCOMPATIBLE: &str = "meta incompatible with fact type";
pub const RULE_BREAKDOWN_TYPE: &str = "breakdown must be temporal or categorical";

pub fn validate_fact(fact: &ChartFact) -> ValidationReport {
    let mut report = ValidationReport::default();

    if fact.subspace.len() > MAX_FILTERS {
        report.push(
            "subspace",
            format!("at most {MAX_FILTERS} filters allowed, found {}", fact.subspace.len()),
        );
    }
    for (i, filter) in fact.subspace.iter().enumerate() {
        if filter.field.is_empty() {
            report.push(format!("subspace[{i}].field"), "must be non-empty");
        }
        if filter.value.is_empty() {
            report.push(format!("subspace[{i}].value"), "must be non-empty");
        }
    }

    if let Some(b) = &fact.breakdown {
        if b.field.is_empty() {
            report.push("breakdown.field", "must be non-empty");
        }
        if !matches!(b.field_type, FieldType::Temporal | FieldType::Categorical) {
            report.push("breakdown.field_type", RULE_BREAKDOWN_TYPE);
        }
    }

    if let Some(m) = &fact.measure {
        if m.aggregation != Aggregation::Count {
            if m.field.is_empty() {
                report.push(
                    "measure.field",
                    "must name a numerical field unless aggregation is count",
                );
            } else if let Some(t) = declared_type(fact, &m.field) {
                if t != FieldType::Numerical {
                    report.push(
                        "measure.field",
                        format!("measure field must be numerical, `{}` is declared {t}", m.field),
                    );
                }
            }
        }
    }

    if let Some(f) = &fact.focus {
        if f.field.is_empty() {
            report.push("focus.field", "must be non-empty");
        }
        if f.value.is_empty() {
            report.push("focus.value", "must be non-empty");
        }
    }

    if !meta_compatible(fact.type_f, &fact.meta) {
        report.push("meta", RULE_META_INCOMPATIBLE);
    }
    match &fact.meta {
        MetaInfo::Categorization { count } if *count == 0 => {
            report.push("meta.count", "category count must be positive");
        }
        MetaInfo::Rank { top3 } => {
            if top3.is_empty() || top3.len() > 3 {
                report.push("meta.top3", "rank meta lists one to three values");
            }
            if top3.iter().any(|s| s.is_empty()) {
                report.push("meta.top3", "rank values must be non-empty");
            }
        }
        _ => {}
    }

    report
}

/// The type declared for `name` by another component of the fact, if any.
fn declared_type(fact: &ChartFact, name: &str) -> Option<FieldType> {
    fact.subspace
        .iter()
        .find(|f| f.field == name)
        .map(|f| f.field_type)
        .or_else(|| {
            fact.breakdown
                .as_ref()
                .filter(|b| b.field == name)
                .map(|b| b.field_type)
        })
        .or_else(|| fact.focus.as_ref().filter(|f| f.field == name).map(|f| f.field_type))
}

#[derive(Debug, Error)]
pub enum FactError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown enum value at line {line}, column {column}: {message}")]
    UnknownEnum {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing required key at line {line}, column {column}: {message}")]
    MissingKey {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
}

impl From<serde_json::Error> for FactError {
    fn from(e: serde_json::Error) -> Self {
        let (line, column) = (e.line(), e.column());
        let message = e.to_string();
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => FactError::Syntax { line, column, message },
            Category::Data if message.starts_with("unknown variant") => {
                FactError::UnknownEnum { line, column, message }
            }
            Category::Data if message.starts_with("missing field") => FactError::MissingKey { line, column, message },
            Category::Data => FactError::Schema { line, column, message },
        }
    }
}

/// Parses one chart-fact object. Unknown keys are rejected.
pub fn parse_fact_json(text: &str) -> Result<ChartFact, FactError> {
    Ok(serde_json::from_str(text)?)
}

/// Compact JSON with keys in tuple order. Absent components are written as `null`.
pub fn serialize_fact(fact: &ChartFact) -> String {
    serde_json::to_string(fact).expect("chart facts always serialize")
}

/// The example fact from the chart-characterization walkthrough: a vertical
/// bar chart showing that the rural population in Guizhou, China is lower.
pub fn example_fact() -> ChartFact {
    ChartFact {
        type_c: ChartType::VerticalBar,
        type_f: FactType::Difference,
        subspace: vec![
            Filter {
                field: "Country".into(),
                value: "China".into(),
                field_type: FieldType::Geographical,
            },
            Filter {
                field: "City".into(),
                value: "Guizhou".into(),
                field_type: FieldType::Geographical,
            },
        ],
        breakdown: Some(FieldRef {
            field: "Location".into(),
            field_type: FieldType::Categorical,
        }),
        measure: Some(MeasureSpec {
            field: "Population".into(),
            aggregation: Aggregation::Sum,
        }),
        focus: None,
        meta: MetaInfo::Difference {
            relation: DifferenceRelation::Lower,
        },
    }
}
