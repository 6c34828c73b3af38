//! The common `classify(source) -> labels` contract over all backends.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::ast::parse;
use crate::knn::{detect_knn, EmbeddingProvider, ExemplarIndex, KnnError, Neighbor};
use crate::llm::{LlmDetector, LlmError};
use crate::rules::{detect_rules_with, Evidence, RuleConfig};
use crate::taxonomy::PlanLabelSet;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Backend-specific justification for a prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Details {
    Evidence(Vec<Evidence>),
    Neighbors(Vec<Neighbor>),
    Completion { raw: String, cached: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub labels: PlanLabelSet,
    pub details: Details,
}

pub trait Detector: Send + Sync {
    fn name(&self) -> &'static str;

    fn classify(&self, source: &str) -> Result<Classification, DetectError>;

    /// Classifies with up to `jobs` threads; results keep input order.
    fn classify_batch(&self, sources: &[&str], jobs: usize) -> Vec<Result<Classification, DetectError>> {
        parallel_map(sources, jobs, |s| self.classify(s))
    }
}

/// Maps `f` over `items` on up to `jobs` scoped threads, preserving order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                *slots[i].lock().expect("slot lock") = Some(f(item));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("slot filled")).collect()
}

#[derive(Debug, Clone, Default)]
pub struct RulesDetector {
    pub config: RuleConfig,
}

impl Detector for RulesDetector {
    fn name(&self) -> &'static str {
        "rules"
    }

    fn classify(&self, source: &str) -> Result<Classification, DetectError> {
        let out = detect_rules_with(&parse(source), &self.config);
        Ok(Classification { labels: out.labels, details: Details::Evidence(out.evidence) })
    }
}

pub struct KnnDetector {
    pub index: ExemplarIndex,
    pub provider: Box<dyn EmbeddingProvider>,
    pub k: usize,
}

impl Detector for KnnDetector {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn classify(&self, source: &str) -> Result<Classification, DetectError> {
        let out = detect_knn(&self.index, self.provider.as_ref(), source, self.k)?;
        Ok(Classification { labels: out.labels, details: Details::Neighbors(out.neighbors) })
    }
}

impl Detector for LlmDetector {
    fn name(&self) -> &'static str {
        "llm"
    }

    fn classify(&self, source: &str) -> Result<Classification, DetectError> {
        let out = self.detect(source)?;
        Ok(Classification {
            labels: out.labels,
            details: Details::Completion { raw: out.completion, cached: out.cached },
        })
    }

    /// Concurrency comes from the LLM configuration; `jobs` is ignored.
    fn classify_batch(&self, sources: &[&str], _jobs: usize) -> Vec<Result<Classification, DetectError>> {
        self.detect_batch(sources)
            .into_iter()
            .map(|r| {
                let out = r?;
                Ok(Classification {
                    labels: out.labels,
                    details: Details::Completion { raw: out.completion, cached: out.cached },
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..100).collect();
        assert_eq!(parallel_map(&items, 7, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(parallel_map(&Vec::<u64>::new(), 4, |x| *x).is_empty());
    }

    #[test]
    fn rules_backend_reports_evidence() {
        let out = RulesDetector::default().classify("total = 0\nfor x in xs:\n    total += x\n").unwrap();
        assert_eq!(out.labels, "processAllItems, sum".parse().unwrap());
        let Details::Evidence(ev) = out.details else { panic!("rules give evidence") };
        assert_eq!(ev.len(), 2);
    }
}
