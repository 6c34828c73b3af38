//! Plain-text tables and CSV exports of metrics reports.

use crate::corpus::Outcome;
use crate::taxonomy::PlanId;

use super::{AblationDelta, MetricsReport};

fn score(x: f64) -> String {
    format!("{x:.4}")
}

fn signed(x: f64) -> String {
    // Avoid printing "-0.0000" for tiny negative deltas.
    let x = if x.abs() < 5e-5 { 0.0 } else { x };
    format!("{x:+.4}")
}

/// Aligns cells into columns: the first left-aligned, the rest right-aligned.
pub fn align(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                out.push_str(&format!("{cell:<w$}", w = widths[i]));
            } else {
                out.push_str(&format!("{cell:>w$}", w = widths[i]));
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Exact match, micro-F1 and weighted-F1 per backend.
pub fn summary_table(rows: &[(&str, &MetricsReport)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            vec![name.to_string(), score(r.exact_match_ratio), score(r.micro_f1), score(r.weighted_f1), r.n.to_string()]
        })
        .collect();
    align(&["backend", "exact_match", "micro_f1", "weighted_f1", "n"], &body)
}

/// Micro-F1 per outcome category; `-` where a category is absent.
pub fn category_table(rows: &[(&str, &MetricsReport)]) -> String {
    let mut header = vec!["backend"];
    header.extend(Outcome::ALL.iter().map(|o| o.name()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.to_string()];
            row.extend(Outcome::ALL.iter().map(|o| r.by_category.get(o).map_or("-".to_string(), |x| score(*x))));
            row
        })
        .collect();
    align(&header, &body)
}

/// Obfuscated micro-F1 with the change from the original in parentheses.
pub fn ablation_table(rows: &[(&str, &MetricsReport, &AblationDelta)]) -> String {
    let mut header = vec!["backend", "overall"];
    header.extend(Outcome::ALL.iter().map(|o| o.name()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, obf, delta)| {
            let mut row = vec![name.to_string(), format!("{} ({})", score(obf.micro_f1), signed(delta.micro_f1))];
            row.extend(Outcome::ALL.iter().map(|o| match (obf.by_category.get(o), delta.by_category.get(o)) {
                (Some(v), Some(d)) => format!("{} ({})", score(*v), signed(*d)),
                _ => "-".to_string(),
            }));
            row
        })
        .collect();
    align(&header, &body)
}

pub fn per_plan_table(report: &MetricsReport) -> String {
    let body: Vec<Vec<String>> = report
        .per_plan
        .iter()
        .map(|(plan, s)| {
            vec![
                plan.name().to_string(),
                score(s.precision),
                score(s.recall),
                score(s.f1),
                s.support.to_string(),
                s.predicted.to_string(),
            ]
        })
        .collect();
    align(&["plan", "precision", "recall", "f1", "support", "predicted"], &body)
}

/// Full text report for one backend.
pub fn render_report(backend: &str, report: &MetricsReport) -> String {
    let rows = [(backend, report)];
    format!(
        "{}\nmicro-F1 by outcome category\n{}\nper-plan scores\n{}",
        summary_table(&rows),
        category_table(&rows),
        per_plan_table(report)
    )
}

pub fn summary_csv(rows: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::from("backend,n,exact_match,micro_f1,weighted_f1");
    for o in Outcome::ALL {
        out.push_str(&format!(",micro_f1_{}", o.name()));
    }
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!("{name},{},{},{},{}", r.n, r.exact_match_ratio, r.micro_f1, r.weighted_f1));
        for o in Outcome::ALL {
            out.push(',');
            if let Some(v) = r.by_category.get(&o) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Long-form per-plan F1 for heatmaps: one row per backend and plan, every
/// plan listed, empty F1 where the plan is absent.
pub fn per_plan_csv(rows: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::from("backend,plan,precision,recall,f1,support,predicted\n");
    for (name, r) in rows {
        for plan in PlanId::ALL {
            match r.per_plan.get(&plan) {
                Some(s) => out.push_str(&format!(
                    "{name},{},{},{},{},{},{}\n",
                    plan.name(),
                    s.precision,
                    s.recall,
                    s.f1,
                    s.support,
                    s.predicted
                )),
                None => out.push_str(&format!("{name},{},,,,0,0\n", plan.name())),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ablation_delta, LabeledPair};
    use crate::taxonomy::PlanLabelSet;

    fn report() -> MetricsReport {
        let pair = |id: &str, g: &[&str], p: &[&str]| LabeledPair {
            id: id.into(),
            gold: PlanLabelSet::from_names(g).unwrap(),
            predicted: PlanLabelSet::from_names(p).unwrap(),
            outcome: Outcome::PassAll,
        };
        MetricsReport::compute(&[pair("a", &["sum"], &["sum"]), pair("b", &["counting"], &["sum"])]).unwrap()
    }

    #[test]
    fn summary_layout() {
        let r = report();
        assert_eq!(
            summary_table(&[("rules", &r)]),
            "backend  exact_match  micro_f1  weighted_f1  n\n\
             -------  -----------  --------  -----------  -\n\
             rules         0.5000    0.5000       0.3333  2\n"
        );
    }

    #[test]
    fn ablation_deltas_are_signed() {
        let r = report();
        let d = ablation_delta(&r, &r).unwrap();
        let table = ablation_table(&[("rules", &r, &d)]);
        assert!(table.contains("0.5000 (+0.0000)"), "{table}");
        assert!(table.lines().nth(2).unwrap().ends_with('-'));
    }

    #[test]
    fn csv_lists_every_plan() {
        let csv = per_plan_csv(&[("rules", &report())]);
        assert_eq!(csv.lines().count(), 1 + PlanId::ALL.len());
        assert!(csv.contains("rules,counting,0,0,0,1,0\n"));
        assert!(csv.contains("rules,UNKNOWN,,,,0,0\n"));
    }
}
