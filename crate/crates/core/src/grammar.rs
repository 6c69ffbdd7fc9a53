//! Fixed 60-rule context-free grammar over fact schemas.
//!
//! A fact's structure is written as a leftmost derivation: the root rule,
//! then one rule per choice made while expanding the seven components in
//! tuple order. Derivations are computed directly from the fact; nothing is
//! ever parsed from strings.

use crate::fact::{
    Aggregation, AssociationSign, ChartFact, ChartType, DifferenceRelation, ExtremeKind, FactType, FieldType, MetaInfo,
    TrendDirection, MAX_FILTERS,
};
use std::fmt::Write as _;
use std::sync::OnceLock;
use thiserror::Error;

pub const RULE_COUNT: usize = 60;
/// Rows of the one-hot schema matrix.
pub const MAX_RULES: usize = 16;
pub const MIN_DERIVATION: usize = 8;
pub const MAX_DERIVATION: usize = 13;

pub type RuleId = u8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub id: RuleId,
    pub lhs: &'static str,
    pub rhs: String,
}

// First id of each rule group. Groups are contiguous and ordered by id.
const ROOT: u8 = 0;
const TYPE_C: u8 = 1; // 15
const TYPE_F: u8 = 16; // 10
const SUBSPACE_EMPTY: u8 = 26;
const SUBSPACE_SINGLE: u8 = 27;
const SUBSPACE_MULTI: u8 = 28;
const FILTER: u8 = 29; // 4 field types
const BREAKDOWN_ABSENT: u8 = 33;
const BREAKDOWN_PRESENT: u8 = 34;
const BFIELD: u8 = 35; // temporal, categorical
const MEASURE: u8 = 37; // 5 aggregations
const FOCUS_ABSENT: u8 = 42;
const FOCUS_PRESENT: u8 = 43;
const FFIELD: u8 = 44; // 4 field types
const META: u8 = 48; // 12 variants

/// Meta alternatives in rule order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetaKind {
    None,
    Trend(TrendDirection),
    Categorization,
    Difference(DifferenceRelation),
    Rank,
    Extreme(ExtremeKind),
    Association(AssociationSign),
}

const META_KINDS: [MetaKind; 12] = [
    MetaKind::None,
    MetaKind::Trend(TrendDirection::Increasing),
    MetaKind::Trend(TrendDirection::Decreasing),
    MetaKind::Trend(TrendDirection::NoTrend),
    MetaKind::Categorization,
    MetaKind::Difference(DifferenceRelation::Lower),
    MetaKind::Difference(DifferenceRelation::Higher),
    MetaKind::Rank,
    MetaKind::Extreme(ExtremeKind::Max),
    MetaKind::Extreme(ExtremeKind::Min),
    MetaKind::Association(AssociationSign::Positive),
    MetaKind::Association(AssociationSign::Negative),
];

impl MetaKind {
    pub fn of(meta: &MetaInfo) -> Self {
        match meta {
            MetaInfo::None => MetaKind::None,
            MetaInfo::Trend { direction } => MetaKind::Trend(*direction),
            MetaInfo::Categorization { .. } => MetaKind::Categorization,
            MetaInfo::Difference { relation } => MetaKind::Difference(*relation),
            MetaInfo::Rank { .. } => MetaKind::Rank,
            MetaInfo::Extreme { extreme } => MetaKind::Extreme(*extreme),
            MetaInfo::Association { sign } => MetaKind::Association(*sign),
        }
    }

    fn rule(self) -> u8 {
        META + META_KINDS.iter().position(|k| *k == self).expect("listed") as u8
    }

    fn rhs(self) -> String {
        match self {
            MetaKind::None => "ε".into(),
            MetaKind::Trend(d) => format!("'trend' '{d}'"),
            MetaKind::Categorization => "'categorization' Count".into(),
            MetaKind::Difference(r) => format!("'difference' '{r}'"),
            MetaKind::Rank => "'rank' Top3".into(),
            MetaKind::Extreme(e) => format!("'extreme' '{e}'"),
            MetaKind::Association(s) => format!("'association' '{s}'"),
        }
    }
}

const BREAKDOWN_TYPES: [FieldType; 2] = [FieldType::Temporal, FieldType::Categorical];

fn build_table() -> Vec<Rule> {
    let mut rules = Vec::with_capacity(RULE_COUNT);
    let mut add = |lhs: &'static str, rhs: String| {
        let id = rules.len() as u8;
        rules.push(Rule { id, lhs, rhs });
    };
    add("Fact", "TypeC TypeF Subspace Breakdown Measure Focus Meta".into());
    for c in ChartType::ALL {
        add("TypeC", format!("'{c}'"));
    }
    for f in FactType::ALL {
        add("TypeF", format!("'{f}'"));
    }
    add("Subspace", "ε".into());
    add("Subspace", "Filter".into());
    add("Subspace", "Filter Filter+".into());
    for t in FieldType::ALL {
        add("Filter", format!("Field<{t}> '=' Value"));
    }
    add("Breakdown", "ε".into());
    add("Breakdown", "BField".into());
    for t in BREAKDOWN_TYPES {
        add("BField", format!("Field<{t}>"));
    }
    for a in Aggregation::ALL {
        add("Measure", format!("'{a}' '(' Field<numerical> ')'"));
    }
    add("Focus", "ε".into());
    add("Focus", "FField '=' Value".into());
    for t in FieldType::ALL {
        add("FField", format!("Field<{t}>"));
    }
    for k in META_KINDS {
        add("Meta", k.rhs());
    }
    assert_eq!(rules.len(), RULE_COUNT);
    rules
}

/// The rule table, indexed by rule id.
pub fn rules() -> &'static [Rule] {
    static TABLE: OnceLock<Vec<Rule>> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

/// One line per rule: `id<TAB>lhs<TAB>rhs`.
pub fn grammar_dump() -> String {
    let mut out = String::new();
    for r in rules() {
        writeln!(out, "{}\t{}\t{}", r.id, r.lhs, r.rhs).unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RuleSequence {
    pub ids: Vec<RuleId>,
}

impl RuleSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Structural content of a fact: everything except its strings and counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FactSkeleton {
    pub chart_type: ChartType,
    pub fact_type: FactType,
    pub filter_types: Vec<FieldType>,
    pub breakdown: Option<FieldType>,
    pub aggregation: Aggregation,
    pub focus: Option<FieldType>,
    pub meta: MetaKind,
}

impl FactSkeleton {
    pub fn of(fact: &ChartFact) -> Self {
        FactSkeleton {
            chart_type: fact.type_c,
            fact_type: fact.type_f,
            filter_types: fact.subspace.iter().map(|f| f.field_type).collect(),
            breakdown: fact.breakdown.as_ref().map(|b| b.field_type),
            aggregation: fact.measure.as_ref().map_or(Aggregation::Count, |m| m.aggregation),
            focus: fact.focus.as_ref().map(|f| f.field_type),
            meta: MetaKind::of(&fact.meta),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("fact is invalid: {0}")]
    InvalidFact(String),
    #[error("rule sequence has {0} rules, the schema matrix holds at most {MAX_RULES}")]
    TooLong(usize),
    #[error("cannot encode an empty rule sequence")]
    Empty,
    #[error("ill-formed derivation at step {step}: {message}")]
    IllFormed { step: usize, message: String },
}

/// Leftmost derivation of the fact's schema.
pub fn derive_rules(fact: &ChartFact) -> Result<RuleSequence, GrammarError> {
    let report = crate::fact::validate_fact(fact);
    if !report.is_valid() {
        let msg = report
            .violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(GrammarError::InvalidFact(msg));
    }
    let mut ids = Vec::with_capacity(MAX_DERIVATION);
    ids.push(ROOT);
    ids.push(TYPE_C + fact.type_c.index() as u8);
    ids.push(TYPE_F + fact.type_f.index() as u8);
    ids.push(match fact.subspace.len() {
        0 => SUBSPACE_EMPTY,
        1 => SUBSPACE_SINGLE,
        _ => SUBSPACE_MULTI,
    });
    for f in &fact.subspace {
        ids.push(FILTER + f.field_type.index() as u8);
    }
    match &fact.breakdown {
        None => ids.push(BREAKDOWN_ABSENT),
        Some(b) => {
            ids.push(BREAKDOWN_PRESENT);
            let k = BREAKDOWN_TYPES
                .iter()
                .position(|t| *t == b.field_type)
                .expect("validated");
            ids.push(BFIELD + k as u8);
        }
    }
    let agg = fact.measure.as_ref().map_or(Aggregation::Count, |m| m.aggregation);
    ids.push(MEASURE + agg.index() as u8);
    match &fact.focus {
        None => ids.push(FOCUS_ABSENT),
        Some(f) => {
            ids.push(FOCUS_PRESENT);
            ids.push(FFIELD + f.field_type.index() as u8);
        }
    }
    ids.push(MetaKind::of(&fact.meta).rule());
    Ok(RuleSequence { ids })
}

/// Row-major 16×60 matrix of zeros and ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SchemaMatrix {
    cells: Vec<u8>,
}

impl SchemaMatrix {
    pub fn zeros() -> Self {
        SchemaMatrix {
            cells: vec![0; MAX_RULES * RULE_COUNT],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * RULE_COUNT + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.cells[row * RULE_COUNT..(row + 1) * RULE_COUNT]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Rule id of each non-zero row, in order.
    pub fn rule_ids(&self) -> Vec<RuleId> {
        (0..MAX_RULES)
            .filter_map(|r| self.row(r).iter().position(|&v| v == 1).map(|c| c as RuleId))
            .collect()
    }
}

pub fn encode_one_hot(seq: &RuleSequence) -> Result<SchemaMatrix, GrammarError> {
    if seq.is_empty() {
        return Err(GrammarError::Empty);
    }
    if seq.len() > MAX_RULES {
        return Err(GrammarError::TooLong(seq.len()));
    }
    let mut m = SchemaMatrix::zeros();
    for (row, &id) in seq.ids.iter().enumerate() {
        if id as usize >= RULE_COUNT {
            return Err(GrammarError::IllFormed {
                step: row,
                message: format!("rule id {id} out of range"),
            });
        }
        m.cells[row * RULE_COUNT + id as usize] = 1;
    }
    Ok(m)
}

struct Cursor<'a> {
    ids: &'a [RuleId],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.ids.get(self.pos).copied()
    }

    /// Consumes the next rule, which must lie in `[first, first + count)`.
    /// Returns its offset within that group.
    fn expect(&mut self, first: u8, count: usize, what: &str) -> Result<usize, GrammarError> {
        let step = self.pos;
        let id = self.peek().ok_or_else(|| GrammarError::IllFormed {
            step,
            message: format!("derivation ends before {what}"),
        })?;
        if id < first || id as usize >= first as usize + count {
            return Err(GrammarError::IllFormed {
                step,
                message: format!("expected a {what} rule, found rule {id}"),
            });
        }
        self.pos += 1;
        Ok((id - first) as usize)
    }
}

/// Rebuilds the structural skeleton from a derivation.
pub fn decode_skeleton(seq: &RuleSequence) -> Result<FactSkeleton, GrammarError> {
    let mut c = Cursor { ids: &seq.ids, pos: 0 };
    c.expect(ROOT, 1, "root")?;
    let chart_type = ChartType::ALL[c.expect(TYPE_C, ChartType::ALL.len(), "chart type")?];
    let fact_type = FactType::ALL[c.expect(TYPE_F, FactType::ALL.len(), "fact type")?];
    let cardinality = c.expect(SUBSPACE_EMPTY, 3, "subspace")?;
    let mut filter_types = Vec::new();
    while matches!(c.peek(), Some(id) if (FILTER..FILTER + 4).contains(&id)) {
        filter_types.push(FieldType::ALL[c.expect(FILTER, 4, "filter")?]);
    }
    let consistent = match cardinality {
        0 => filter_types.is_empty(),
        1 => filter_types.len() == 1,
        _ => (2..=MAX_FILTERS).contains(&filter_types.len()),
    };
    if !consistent {
        return Err(GrammarError::IllFormed {
            step: c.pos,
            message: format!(
                "subspace rule {} does not match {} filter rules",
                SUBSPACE_EMPTY as usize + cardinality,
                filter_types.len()
            ),
        });
    }
    let breakdown = match c.expect(BREAKDOWN_ABSENT, 2, "breakdown")? {
        0 => None,
        _ => Some(BREAKDOWN_TYPES[c.expect(BFIELD, 2, "breakdown field type")?]),
    };
    let aggregation = Aggregation::ALL[c.expect(MEASURE, 5, "measure")?];
    let focus = match c.expect(FOCUS_ABSENT, 2, "focus")? {
        0 => None,
        _ => Some(FieldType::ALL[c.expect(FFIELD, 4, "focus field type")?]),
    };
    let meta = META_KINDS[c.expect(META, META_KINDS.len(), "meta")?];
    if c.pos != seq.ids.len() {
        return Err(GrammarError::IllFormed {
            step: c.pos,
            message: "trailing rules after meta".into(),
        });
    }
    Ok(FactSkeleton {
        chart_type,
        fact_type,
        filter_types,
        breakdown,
        aggregation,
        focus,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact::{example_fact, testing::valid_fact, FieldRef, Filter, Focus, MeasureSpec};
    use proptest::prelude::*;

    fn rule_named(lhs: &str, rhs_contains: &str) -> RuleId {
        rules()
            .iter()
            .find(|r| r.lhs == lhs && r.rhs.contains(rhs_contains))
            .unwrap_or_else(|| panic!("no rule {lhs} -> *{rhs_contains}*"))
            .id
    }

    #[test]
    fn table_has_sixty_rules_with_bijective_ids() {
        let table = rules();
        assert_eq!(table.len(), RULE_COUNT);
        for (i, r) in table.iter().enumerate() {
            assert_eq!(r.id as usize, i);
        }
        let per_lhs = |lhs: &str| table.iter().filter(|r| r.lhs == lhs).count();
        assert_eq!(
            [
                per_lhs("Fact"),
                per_lhs("TypeC"),
                per_lhs("TypeF"),
                per_lhs("Subspace"),
                per_lhs("Filter"),
                per_lhs("Breakdown"),
                per_lhs("BField"),
                per_lhs("Measure"),
                per_lhs("Focus"),
                per_lhs("FField"),
                per_lhs("Meta"),
            ],
            [1, 15, 10, 3, 4, 2, 2, 5, 2, 4, 12]
        );
    }

    #[test]
    fn example_fact_derivation() {
        let seq = derive_rules(&example_fact()).unwrap();
        let expected = vec![
            0,
            rule_named("TypeC", "vertical bar chart"),
            rule_named("TypeF", "difference"),
            rule_named("Subspace", "Filter Filter+"),
            rule_named("Filter", "geographical"),
            rule_named("Filter", "geographical"),
            rule_named("Breakdown", "BField"),
            rule_named("BField", "categorical"),
            rule_named("Measure", "sum"),
            FOCUS_ABSENT,
            rule_named("Meta", "'lower'"),
        ];
        assert_eq!(seq.ids, expected);
        assert_eq!(seq.len(), 11);
    }

    #[test]
    fn minimal_fact_derives_eight_rules() {
        let seq = derive_rules(&ChartFact::minimal(ChartType::Table, FactType::Value)).unwrap();
        assert_eq!(
            seq.ids,
            vec![
                0,
                rule_named("TypeC", "'table'"),
                rule_named("TypeF", "'value'"),
                SUBSPACE_EMPTY,
                BREAKDOWN_ABSENT,
                rule_named("Measure", "count"),
                FOCUS_ABSENT,
                META
            ]
        );
    }

    #[test]
    fn maximal_fact_derives_thirteen_rules() {
        let mut f = example_fact();
        f.subspace.push(Filter {
            field: "Year".into(),
            value: "2018".into(),
            field_type: FieldType::Temporal,
        });
        f.focus = Some(Focus {
            field: "Location".into(),
            field_type: FieldType::Categorical,
            value: "Rural".into(),
        });
        assert_eq!(derive_rules(&f).unwrap().len(), MAX_DERIVATION);
    }

    #[test]
    fn invalid_fact_is_not_derived() {
        let mut f = example_fact();
        f.breakdown = Some(FieldRef {
            field: "Population".into(),
            field_type: FieldType::Numerical,
        });
        assert!(matches!(derive_rules(&f), Err(GrammarError::InvalidFact(_))));
    }

    #[test]
    fn one_hot_of_example() {
        let seq = derive_rules(&example_fact()).unwrap();
        let m = encode_one_hot(&seq).unwrap();
        for r in 0..MAX_RULES {
            let ones = m.row(r).iter().filter(|&&v| v == 1).count();
            assert_eq!(ones, usize::from(r < 11));
        }
        assert_eq!(m.cells().iter().map(|&v| v as usize).sum::<usize>(), 11);
        assert_eq!(m.rule_ids(), seq.ids);
    }

    #[test]
    fn one_hot_errors() {
        assert_eq!(encode_one_hot(&RuleSequence { ids: vec![] }), Err(GrammarError::Empty));
        assert_eq!(
            encode_one_hot(&RuleSequence { ids: vec![0; 17] }),
            Err(GrammarError::TooLong(17))
        );
    }

    #[test]
    fn truncated_sequence_is_ill_formed() {
        let mut seq = derive_rules(&example_fact()).unwrap();
        seq.ids.pop();
        assert!(matches!(decode_skeleton(&seq), Err(GrammarError::IllFormed { .. })));
    }

    #[test]
    fn cardinality_mismatch_is_ill_formed() {
        let mut seq = derive_rules(&example_fact()).unwrap();
        seq.ids[3] = SUBSPACE_SINGLE;
        assert!(matches!(decode_skeleton(&seq), Err(GrammarError::IllFormed { .. })));
    }

    #[test]
    fn absent_measure_uses_count_rule() {
        let mut f = example_fact();
        f.measure = None;
        let seq = derive_rules(&f).unwrap();
        assert!(seq.ids.contains(&rule_named("Measure", "count")));
        let mut g = f.clone();
        g.measure = Some(MeasureSpec {
            field: String::new(),
            aggregation: Aggregation::Count,
        });
        assert_eq!(derive_rules(&g).unwrap(), seq);
    }

    #[test]
    fn example_round_trips_through_skeleton() {
        let f = example_fact();
        let seq = derive_rules(&f).unwrap();
        assert_eq!(decode_skeleton(&seq).unwrap(), FactSkeleton::of(&f));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn derive_then_decode_is_identity_on_skeletons(f in valid_fact()) {
            let seq = derive_rules(&f).unwrap();
            prop_assert!((MIN_DERIVATION..=MAX_DERIVATION).contains(&seq.len()));
            let m = encode_one_hot(&seq).unwrap();
            prop_assert_eq!(m.cells().iter().map(|&v| v as usize).sum::<usize>(), seq.len());
            prop_assert_eq!(decode_skeleton(&seq).unwrap(), FactSkeleton::of(&f));
        }
    }
}
