//! Metrics and signed-rank p-values against brute-force counting and
//! full sign enumeration.

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use planlens::corpus::Outcome;
use planlens::eval::{
    exact_match_ratio, micro_f1, per_plan_f1, weighted_f1, wilcoxon_signed_rank, wilcoxon_signed_rank_with,
    LabeledPair, PMethod,
};
use planlens::taxonomy::{PlanId, PlanLabelSet};

type Names = BTreeSet<&'static str>;

const NAMES: [&str; 10] = [
    "processAllItems",
    "filterACollection",
    "findBestInCollection",
    "sum",
    "evennessCheck",
    "counting",
    "booleanOperatorChaining",
    "multiWayBranching",
    "linearSearching",
    "UNKNOWN",
];

fn names() -> impl Strategy<Value = Names> {
    prop_oneof![
        1 => Just(BTreeSet::from(["UNKNOWN"])),
        4 => proptest::sample::subsequence(NAMES[..9].to_vec(), 1..=4).prop_map(|v| v.into_iter().collect()),
    ]
}

fn pairs() -> impl Strategy<Value = Vec<(Names, Names)>> {
    prop::collection::vec((names(), names()), 1..=50)
}

fn to_pairs(raw: &[(Names, Names)]) -> Vec<LabeledPair> {
    raw.iter()
        .enumerate()
        .map(|(i, (g, p))| LabeledPair {
            id: i.to_string(),
            gold: PlanLabelSet::from_names(&g.iter().collect::<Vec<_>>()).unwrap(),
            predicted: PlanLabelSet::from_names(&p.iter().collect::<Vec<_>>()).unwrap(),
            outcome: Outcome::PassAll,
        })
        .collect()
}

/// Per-label confusion table: label -> [tp, fp, fn].
fn confusion(raw: &[(Names, Names)]) -> HashMap<&'static str, [u32; 3]> {
    let mut table: HashMap<&'static str, [u32; 3]> = HashMap::new();
    for (g, p) in raw {
        for &label in NAMES.iter() {
            let slot = match (g.contains(label), p.contains(label)) {
                (true, true) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (false, false) => continue,
            };
            table.entry(label).or_default()[slot] += 1;
        }
    }
    table
}

fn f1_of(c: [u32; 3]) -> f64 {
    let [tp, fp, fn_] = c;
    if tp == 0 {
        0.0
    } else {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        2.0 * precision * recall / (precision + recall)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn metrics_match_counting_oracle(raw in pairs()) {
        let pairs = to_pairs(&raw);
        let table = confusion(&raw);

        let exact = raw.iter().filter(|(g, p)| g == p).count() as f64 / raw.len() as f64;
        prop_assert!((exact_match_ratio(&pairs).unwrap() - exact).abs() < 1e-12);

        let total = table.values().fold([0, 0, 0], |a, c| [a[0] + c[0], a[1] + c[1], a[2] + c[2]]);
        prop_assert!((micro_f1(&pairs).unwrap() - f1_of(total)).abs() < 1e-12);

        let per = per_plan_f1(&pairs).unwrap();
        prop_assert_eq!(per.len(), table.len());
        for (label, c) in &table {
            let plan: PlanId = label.parse().unwrap();
            prop_assert!((per[&plan] - f1_of(*c)).abs() < 1e-12, "{}", label);
        }

        let support = |c: &[u32; 3]| (c[0] + c[2]) as f64;
        let num: f64 = table.values().map(|c| support(c) * f1_of(*c)).sum();
        let den: f64 = table.values().map(support).sum();
        prop_assert!((weighted_f1(&pairs).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_pair_order(raw in pairs(), rot in 0usize..50) {
        let pairs = to_pairs(&raw);
        let mut rotated = pairs.clone();
        rotated.rotate_left(rot % pairs.len());
        rotated.reverse();
        prop_assert_eq!(micro_f1(&pairs).unwrap(), micro_f1(&rotated).unwrap());
        prop_assert_eq!(per_plan_f1(&pairs).unwrap(), per_plan_f1(&rotated).unwrap());
        prop_assert!((weighted_f1(&pairs).unwrap() - weighted_f1(&rotated).unwrap()).abs() < 1e-12);
    }
}

/// Two-sided p by enumerating every sign assignment of the ranked
/// differences.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let rank = |i: usize| {
        let v = d[i].abs();
        let below = d.iter().filter(|x| x.abs() < v).count() as f64;
        let equal = d.iter().filter(|x| x.abs() == v).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = (0..n).map(rank).collect();
    let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut low, mut high) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        low += (w <= observed + 1e-9) as u64;
        high += (w >= observed - 1e-9) as u64;
    }
    (2.0 * low.min(high) as f64 / (1u64 << n) as f64).min(1.0)
}

fn scores() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.8, 1.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(250))]

    #[test]
    fn exact_p_matches_enumeration(v in prop::collection::vec((scores(), scores()), 6..=12)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        match wilcoxon_signed_rank(&a, &b, 1) {
            Ok(r) => {
                prop_assert_eq!(r.method, PMethod::Exact);
                prop_assert!((r.p_value - enumerated_p(&a, &b)).abs() < 1e-10);
                prop_assert!((r.w_plus + r.w_minus - (r.n * (r.n + 1)) as f64 / 2.0).abs() < 1e-9);
            }
            Err(_) => {
                let nonzero = a.iter().zip(&b).filter(|(x, y)| x != y).count();
                prop_assert!(nonzero < 6);
            }
        }
    }
}

#[test]
fn ten_pair_example_matches_enumeration() {
    let a = [0.80, 0.67, 1.00, 0.50, 0.90, 0.75, 0.60, 1.00, 0.40, 0.85];
    let b = [0.70, 0.70, 0.80, 0.50, 0.60, 0.55, 0.65, 0.90, 0.20, 0.60];
    let r = wilcoxon_signed_rank(&a, &b, 3).unwrap();
    let p = enumerated_p(&a, &b);
    assert_eq!(r.n, 9);
    assert!((r.p_value - p).abs() < 1e-12);
    assert!((r.adjusted_p - (3.0 * p).min(1.0)).abs() < 1e-12);
}

#[test]
fn normal_branch_tracks_enumeration_at_twenty() {
    let a: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
    let b: Vec<f64> = (0..20).map(|i| ((i * 5 + 3) % 13) as f64 / 12.0).collect();
    let normal = wilcoxon_signed_rank_with(&a, &b, 1, PMethod::Normal).unwrap();
    let exact = wilcoxon_signed_rank_with(&a, &b, 1, PMethod::Exact).unwrap();
    assert!((normal.p_value - enumerated_p(&a, &b)).abs() < 0.01, "{} vs {}", normal.p_value, exact.p_value);
}

#[test]
fn uniformly_better_scores_are_significant() {
    let b: Vec<f64> = (0..20).map(|i| (i % 5) as f64 / 10.0).collect();
    let a: Vec<f64> = b.iter().enumerate().map(|(i, x)| x + 0.05 + (i % 3) as f64 / 100.0).collect();
    let r = wilcoxon_signed_rank(&a, &b, 1).unwrap();
    assert!(r.p_value < 0.01);
    assert_eq!(r.statistic, 0.0);
}
