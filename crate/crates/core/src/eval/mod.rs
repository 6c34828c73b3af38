//! Multi-label metrics, outcome-category breakdowns, ablation deltas and
//! paired significance tests.
//!
//! `UNKNOWN` is scored like any other label.

pub mod report;
pub mod wilcoxon;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Outcome;
use crate::taxonomy::{PlanId, PlanLabelSet};

pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, PMethod, WilcoxonResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no labeled pairs to score")]
    EmptyInput,
    #[error("reports cover different submissions ({only_left} only in the first, {only_right} only in the second)")]
    IdMismatch { only_left: usize, only_right: usize },
    #[error("{n} non-zero paired differences; at least 6 are required")]
    TooFewPairs { n: usize },
    #[error("paired vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("number of comparisons must be at least 1")]
    NoComparisons,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledPair {
    pub id: String,
    pub gold: PlanLabelSet,
    pub predicted: PlanLabelSet,
    pub outcome: Outcome,
}

/// Pooled confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn f1(self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 0.0;
        }
        (2 * self.tp) as f64 / denom as f64
    }

    pub fn precision(self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    fn add_pair(&mut self, gold: &PlanLabelSet, pred: &PlanLabelSet) {
        let common = gold.intersection_len(pred);
        self.tp += common;
        self.fp += pred.len() - common;
        self.fn_ += gold.len() - common;
    }
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// One-vs-rest scores for one plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Pairs whose gold set contains the plan.
    pub support: usize,
    /// Pairs whose predicted set contains the plan.
    pub predicted: usize,
}

fn non_empty(pairs: &[LabeledPair]) -> Result<(), EvalError> {
    if pairs.is_empty() {
        Err(EvalError::EmptyInput)
    } else {
        Ok(())
    }
}

pub fn exact_match_ratio(pairs: &[LabeledPair]) -> Result<f64, EvalError> {
    non_empty(pairs)?;
    let hits = pairs.iter().filter(|p| p.gold == p.predicted).count();
    Ok(hits as f64 / pairs.len() as f64)
}

pub fn micro_counts(pairs: &[LabeledPair]) -> Counts {
    let mut c = Counts::default();
    for p in pairs {
        c.add_pair(&p.gold, &p.predicted);
    }
    c
}

/// F1 over pooled plan instances: `2TP / (2TP + FP + FN)`.
pub fn micro_f1(pairs: &[LabeledPair]) -> Result<f64, EvalError> {
    non_empty(pairs)?;
    Ok(micro_counts(pairs).f1())
}

/// Per-plan scores. A plan is present when it occurs in some gold or some
/// predicted set; a plan that is predicted but never gold scores 0.
pub fn per_plan_scores(pairs: &[LabeledPair]) -> Result<BTreeMap<PlanId, PlanScore>, EvalError> {
    non_empty(pairs)?;
    let mut counts: BTreeMap<PlanId, (Counts, usize, usize)> = BTreeMap::new();
    for plan in PlanId::ALL {
        let mut c = Counts::default();
        let (mut support, mut predicted) = (0, 0);
        for p in pairs {
            let (g, q) = (p.gold.contains(plan), p.predicted.contains(plan));
            support += g as usize;
            predicted += q as usize;
            match (g, q) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        if support + predicted > 0 {
            counts.insert(plan, (c, support, predicted));
        }
    }
    Ok(counts
        .into_iter()
        .map(|(plan, (c, support, predicted))| {
            (plan, PlanScore { precision: c.precision(), recall: c.recall(), f1: c.f1(), support, predicted })
        })
        .collect())
}

pub fn per_plan_f1(pairs: &[LabeledPair]) -> Result<BTreeMap<PlanId, f64>, EvalError> {
    Ok(per_plan_scores(pairs)?.into_iter().map(|(p, s)| (p, s.f1)).collect())
}

/// Support-weighted mean of per-plan F1; zero-support plans do not count.
pub fn weighted_f1(pairs: &[LabeledPair]) -> Result<f64, EvalError> {
    let scores = per_plan_scores(pairs)?;
    let total: usize = scores.values().map(|s| s.support).sum();
    let weighted: f64 = scores.values().map(|s| s.support as f64 * s.f1).sum();
    Ok(weighted / total as f64)
}

/// Micro-F1 restricted to each outcome category present.
pub fn breakdown_by_category(pairs: &[LabeledPair]) -> Result<BTreeMap<Outcome, f64>, EvalError> {
    non_empty(pairs)?;
    let mut groups: BTreeMap<Outcome, Counts> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.outcome).or_default().add_pair(&p.gold, &p.predicted);
    }
    Ok(groups.into_iter().map(|(o, c)| (o, c.f1())).collect())
}

/// F1 of a single pair; equal sets score 1.
pub fn pair_f1(gold: &PlanLabelSet, predicted: &PlanLabelSet) -> f64 {
    if gold == predicted {
        return 1.0;
    }
    let common = gold.intersection_len(predicted);
    2.0 * common as f64 / (gold.len() + predicted.len()) as f64
}

/// Per-submission F1 values in pair order, the unit of paired tests.
pub fn per_submission_f1(pairs: &[LabeledPair]) -> Vec<f64> {
    pairs.iter().map(|p| pair_f1(&p.gold, &p.predicted)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub exact_match_ratio: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub per_plan: BTreeMap<PlanId, PlanScore>,
    pub by_category: BTreeMap<Outcome, f64>,
    #[serde(skip)]
    pub ids: BTreeSet<String>,
}

impl MetricsReport {
    pub fn compute(pairs: &[LabeledPair]) -> Result<MetricsReport, EvalError> {
        let per_plan = per_plan_scores(pairs)?;
        Ok(MetricsReport {
            n: pairs.len(),
            exact_match_ratio: exact_match_ratio(pairs)?,
            micro_f1: micro_f1(pairs)?,
            weighted_f1: weighted_f1(pairs)?,
            per_plan,
            by_category: breakdown_by_category(pairs)?,
            ids: pairs.iter().map(|p| p.id.clone()).collect(),
        })
    }

    pub fn per_plan_f1(&self) -> BTreeMap<PlanId, f64> {
        self.per_plan.iter().map(|(p, s)| (*p, s.f1)).collect()
    }

    /// Gold support per plan; sums to the number of gold label instances.
    pub fn support(&self) -> BTreeMap<PlanId, usize> {
        self.per_plan.iter().filter(|(_, s)| s.support > 0).map(|(p, s)| (*p, s.support)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationDelta {
    /// `obfuscated - original` micro-F1.
    pub micro_f1: f64,
    /// Per-category deltas, for categories present in both reports.
    pub by_category: BTreeMap<Outcome, f64>,
}

pub fn ablation_delta(original: &MetricsReport, obfuscated: &MetricsReport) -> Result<AblationDelta, EvalError> {
    if original.ids != obfuscated.ids {
        return Err(EvalError::IdMismatch {
            only_left: original.ids.difference(&obfuscated.ids).count(),
            only_right: obfuscated.ids.difference(&original.ids).count(),
        });
    }
    let by_category = original
        .by_category
        .iter()
        .filter_map(|(o, before)| obfuscated.by_category.get(o).map(|after| (*o, after - before)))
        .collect();
    Ok(AblationDelta { micro_f1: obfuscated.micro_f1 - original.micro_f1, by_category })
}
