//! The closed set of programming plans and the multi-label target type.
//!
//! Nine plans plus the exclusive `UNKNOWN` label. Canonical spelling is the
//! camelCase plan name; parsing is case-insensitive and whitespace-tolerant.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A programming plan, or `Unknown` when no known plan applies.
///
/// The declaration order is the catalog order and is used for every
/// deterministic rendering (label strings, reports, explanations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlanId {
    ProcessAllItems,
    FilterACollection,
    FindBestInCollection,
    Sum,
    EvennessCheck,
    Counting,
    BooleanOperatorChaining,
    MultiWayBranching,
    LinearSearching,
    Unknown,
}

impl PlanId {
    pub const ALL: [PlanId; 10] = [
        PlanId::ProcessAllItems,
        PlanId::FilterACollection,
        PlanId::FindBestInCollection,
        PlanId::Sum,
        PlanId::EvennessCheck,
        PlanId::Counting,
        PlanId::BooleanOperatorChaining,
        PlanId::MultiWayBranching,
        PlanId::LinearSearching,
        PlanId::Unknown,
    ];

    /// The nine named plans, without `Unknown`.
    pub const PLANS: [PlanId; 9] = [
        PlanId::ProcessAllItems,
        PlanId::FilterACollection,
        PlanId::FindBestInCollection,
        PlanId::Sum,
        PlanId::EvennessCheck,
        PlanId::Counting,
        PlanId::BooleanOperatorChaining,
        PlanId::MultiWayBranching,
        PlanId::LinearSearching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlanId::ProcessAllItems => "processAllItems",
            PlanId::FilterACollection => "filterACollection",
            PlanId::FindBestInCollection => "findBestInCollection",
            PlanId::Sum => "sum",
            PlanId::EvennessCheck => "evennessCheck",
            PlanId::Counting => "counting",
            PlanId::BooleanOperatorChaining => "booleanOperatorChaining",
            PlanId::MultiWayBranching => "multiWayBranching",
            PlanId::LinearSearching => "linearSearching",
            PlanId::Unknown => "UNKNOWN",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Case-insensitive lookup of a trimmed token.
    pub fn lookup(token: &str) -> Option<PlanId> {
        let token = token.trim();
        PlanId::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(token))
    }
}

impl fmt::Display for PlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlanId {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlanId::lookup(s).ok_or_else(|| LabelError::UnknownToken(s.trim().to_string()))
    }
}

impl Serialize for PlanId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PlanId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("unrecognized plan label `{0}`")]
    UnknownToken(String),
    #[error("UNKNOWN cannot be combined with other plans")]
    ExclusivityViolation,
    #[error("empty label set")]
    Empty,
}

/// A finalized, non-empty set of plans where `UNKNOWN` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlanLabelSet(BTreeSet<PlanId>);

impl PlanLabelSet {
    pub fn unknown() -> Self {
        PlanLabelSet(BTreeSet::from([PlanId::Unknown]))
    }

    pub fn single(plan: PlanId) -> Self {
        PlanLabelSet(BTreeSet::from([plan]))
    }

    /// Builds a set from plans, rejecting empty input and mixed `UNKNOWN`.
    pub fn new<I: IntoIterator<Item = PlanId>>(plans: I) -> Result<Self, LabelError> {
        let set: BTreeSet<PlanId> = plans.into_iter().collect();
        if set.is_empty() {
            return Err(LabelError::Empty);
        }
        if set.contains(&PlanId::Unknown) && set.len() > 1 {
            return Err(LabelError::ExclusivityViolation);
        }
        Ok(PlanLabelSet(set))
    }

    /// Builds a set from label names, matched case-insensitively.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, LabelError> {
        let plans = names.iter().map(|n| n.as_ref().trim().parse::<PlanId>()).collect::<Result<Vec<_>, _>>()?;
        PlanLabelSet::new(plans)
    }

    /// Builds a set from detected plans; an empty detection becomes `{UNKNOWN}`
    /// and `UNKNOWN` alongside named plans is dropped.
    pub fn from_detected<I: IntoIterator<Item = PlanId>>(plans: I) -> Self {
        let mut set: BTreeSet<PlanId> = plans.into_iter().collect();
        if set.len() > 1 {
            set.remove(&PlanId::Unknown);
        }
        if set.is_empty() {
            return PlanLabelSet::unknown();
        }
        PlanLabelSet(set)
    }

    pub fn contains(&self, plan: PlanId) -> bool {
        self.0.contains(&plan)
    }

    pub fn is_unknown(&self) -> bool {
        self.0.contains(&PlanId::Unknown)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Plans in catalog order.
    pub fn iter(&self) -> impl Iterator<Item = PlanId> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection_len(&self, other: &PlanLabelSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    /// Canonical rendering: catalog order, joined by `", "`.
    pub fn render(&self) -> String {
        self.iter().map(PlanId::name).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for PlanLabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for PlanLabelSet {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_labels(s)
    }
}

impl Serialize for PlanLabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for PlanLabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let plans = Vec::<PlanId>::deserialize(deserializer)?;
        PlanLabelSet::new(plans).map_err(serde::de::Error::custom)
    }
}

/// Parses a comma- or newline-separated label string.
///
/// Every token must name a plan; unrecognized tokens are reported, never
/// dropped. Duplicate tokens collapse.
pub fn parse_labels(text: &str) -> Result<PlanLabelSet, LabelError> {
    let plans = text
        .split([',', '\n'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse::<PlanId>)
        .collect::<Result<Vec<_>, _>>()?;
    PlanLabelSet::new(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_plain_lists() {
        let set = parse_labels("sum, counting").unwrap();
        assert_eq!(set, PlanLabelSet::new([PlanId::Sum, PlanId::Counting]).unwrap());
        assert_eq!(parse_labels("UNKNOWN").unwrap(), PlanLabelSet::unknown());
        assert_eq!(
            parse_labels("  Sum\nPROCESSALLITEMS \n").unwrap(),
            PlanLabelSet::new([PlanId::Sum, PlanId::ProcessAllItems]).unwrap()
        );
    }

    #[test]
    fn rejects_mixed_unknown_and_bad_tokens() {
        assert_eq!(parse_labels("UNKNOWN, sum"), Err(LabelError::ExclusivityViolation));
        assert_eq!(parse_labels("sum, averaging"), Err(LabelError::UnknownToken("averaging".into())));
        assert_eq!(parse_labels(" , "), Err(LabelError::Empty));
    }

    #[test]
    fn detected_sets_resolve_in_favor_of_plans() {
        let set = PlanLabelSet::from_detected([PlanId::Unknown, PlanId::Sum]);
        assert_eq!(set, PlanLabelSet::single(PlanId::Sum));
        assert_eq!(PlanLabelSet::from_detected([]), PlanLabelSet::unknown());
    }

    #[test]
    fn names_are_distinct() {
        let names: BTreeSet<_> = PlanId::ALL.iter().map(|p| p.name()).collect();
        assert_eq!(names.len(), 10);
        for p in PlanId::ALL {
            assert_eq!(p.name().parse::<PlanId>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
    }

    fn label_set() -> impl Strategy<Value = PlanLabelSet> {
        prop_oneof![
            Just(PlanLabelSet::unknown()),
            proptest::sample::subsequence(PlanId::PLANS.to_vec(), 1..=9).prop_map(|v| PlanLabelSet::new(v).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(set in label_set()) {
            prop_assert_eq!(parse_labels(&set.render()).unwrap(), set.clone());
            let json = serde_json::to_string(&set).unwrap();
            prop_assert_eq!(serde_json::from_str::<PlanLabelSet>(&json).unwrap(), set);
        }
    }
}
