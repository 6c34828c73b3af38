//! Line-JSON corpus format, validation, manifests and stratified sampling.
//!
//! Each line of a `.jsonl` corpus is one record:
//!
//! ```text
//! {"schema":"v1","kind":"submission","id":"p1-003","problem":"p1","outcome":"PassSome",
//!  "labels":["processAllItems","sum"],"provenance":"...","source":"total = 0\n..."}
//! ```
//!
//! `kind` is `submission` or `exemplar`. Submissions require `outcome`;
//! `labels` is optional for submissions and required for exemplars. Keys are
//! written in the order shown, so saving a loaded corpus is byte-stable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::taxonomy::{PlanId, PlanLabelSet};

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    PassAll,
    PassSome,
    PassNone,
    SyntaxError,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::PassAll, Outcome::PassSome, Outcome::PassNone, Outcome::SyntaxError];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::PassAll => "PassAll",
            Outcome::PassSome => "PassSome",
            Outcome::PassNone => "PassNone",
            Outcome::SyntaxError => "SyntaxError",
        }
    }

    /// Submissions passing at least one test.
    pub fn passes_some_test(self) -> bool {
        matches!(self, Outcome::PassAll | Outcome::PassSome)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Outcome::ALL.into_iter().find(|o| o.name() == s).ok_or_else(|| format!("unknown outcome `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub id: String,
    pub problem: String,
    pub source: String,
    pub outcome: Outcome,
    pub labels: Option<PlanLabelSet>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub id: String,
    pub problem: String,
    pub source: String,
    pub labels: PlanLabelSet,
    pub provenance: String,
}

impl Exemplar {
    /// The catalog's snippets as exemplars, in catalog order.
    pub fn from_catalog(catalog: &Catalog) -> Vec<Exemplar> {
        catalog
            .snippets()
            .map(|s| Exemplar {
                id: s.id.clone(),
                problem: "catalog".into(),
                source: s.source.clone(),
                labels: s.labels.clone(),
                provenance: format!("catalog v{}", catalog.version),
            })
            .collect()
    }
}

/// On-disk record; field order is the canonical key order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    schema: String,
    kind: String,
    id: String,
    problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<String>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    provenance: String,
    source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaViolation {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{} schema violation(s); first: {}", .0.len(), .0[0])]
    Schema(Vec<SchemaViolation>),
    #[error("duplicate id `{id}` on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema: String,
    pub submissions: usize,
    pub exemplars: usize,
    pub outcomes: BTreeMap<Outcome, usize>,
    /// Gold-label counts over labeled submissions.
    pub plans: BTreeMap<PlanId, usize>,
    pub exemplar_plans: BTreeMap<PlanId, usize>,
}

impl CorpusManifest {
    pub fn compute(submissions: &[Submission], exemplars: &[Exemplar]) -> CorpusManifest {
        let mut outcomes = BTreeMap::new();
        let mut plans = BTreeMap::new();
        for s in submissions {
            *outcomes.entry(s.outcome).or_insert(0) += 1;
            for p in s.labels.iter().flat_map(|l| l.iter()) {
                *plans.entry(p).or_insert(0) += 1;
            }
        }
        let mut exemplar_plans = BTreeMap::new();
        for p in exemplars.iter().flat_map(|e| e.labels.iter()) {
            *exemplar_plans.entry(p).or_insert(0) += 1;
        }
        CorpusManifest {
            schema: SCHEMA_VERSION.into(),
            submissions: submissions.len(),
            exemplars: exemplars.len(),
            outcomes,
            plans,
            exemplar_plans,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub submissions: Vec<Submission>,
    pub exemplars: Vec<Exemplar>,
}

impl Corpus {
    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest::compute(&self.submissions, &self.exemplars)
    }

    pub fn submission(&self, id: &str) -> Option<&Submission> {
        self.submissions.iter().find(|s| s.id == id)
    }
}

pub fn load_corpus(path: &Path) -> Result<(Corpus, CorpusManifest), CorpusError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    let corpus = parse_corpus(&text)?;
    let manifest = corpus.manifest();
    Ok((corpus, manifest))
}

pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut violations = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                violations.push(SchemaViolation { line: lineno, reason: e.to_string() });
                continue;
            }
        };
        if !ids.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId { id: record.id, line: lineno });
        }
        match validate(record) {
            Ok(Item::Submission(s)) => corpus.submissions.push(s),
            Ok(Item::Exemplar(e)) => corpus.exemplars.push(e),
            Err(reason) => violations.push(SchemaViolation { line: lineno, reason }),
        }
    }
    if violations.is_empty() {
        Ok(corpus)
    } else {
        Err(CorpusError::Schema(violations))
    }
}

enum Item {
    Submission(Submission),
    Exemplar(Exemplar),
}

fn validate(r: Record) -> Result<Item, String> {
    if r.schema != SCHEMA_VERSION {
        return Err(format!("unsupported schema `{}`", r.schema));
    }
    if r.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if r.source.trim().is_empty() {
        return Err(format!("record `{}` has an empty source", r.id));
    }
    let labels = match &r.labels {
        None => None,
        Some(tokens) => Some(PlanLabelSet::from_names(tokens).map_err(|e| format!("record `{}` labels: {e}", r.id))?),
    };
    match r.kind.as_str() {
        "submission" => {
            let outcome =
                r.outcome.as_deref().ok_or_else(|| format!("submission `{}` has no outcome", r.id))?.parse()?;
            Ok(Item::Submission(Submission {
                id: r.id,
                problem: r.problem,
                source: r.source,
                outcome,
                labels,
                provenance: r.provenance,
            }))
        }
        "exemplar" => {
            if r.outcome.is_some() {
                return Err(format!("exemplar `{}` must not carry an outcome", r.id));
            }
            let labels = labels.ok_or_else(|| format!("exemplar `{}` has no labels", r.id))?;
            Ok(Item::Exemplar(Exemplar {
                id: r.id,
                problem: r.problem,
                source: r.source,
                labels,
                provenance: r.provenance,
            }))
        }
        other => Err(format!("unknown record kind `{other}`")),
    }
}

fn label_names(labels: &PlanLabelSet) -> Vec<String> {
    labels.iter().map(|p| p.name().to_string()).collect()
}

pub fn submission_line(s: &Submission) -> String {
    let record = Record {
        schema: SCHEMA_VERSION.into(),
        kind: "submission".into(),
        id: s.id.clone(),
        problem: s.problem.clone(),
        outcome: Some(s.outcome.name().into()),
        labels: s.labels.as_ref().map(label_names),
        provenance: s.provenance.clone(),
        source: s.source.clone(),
    };
    serde_json::to_string(&record).expect("records serialize")
}

pub fn exemplar_line(e: &Exemplar) -> String {
    let record = Record {
        schema: SCHEMA_VERSION.into(),
        kind: "exemplar".into(),
        id: e.id.clone(),
        problem: e.problem.clone(),
        outcome: None,
        labels: Some(label_names(&e.labels)),
        provenance: e.provenance.clone(),
        source: e.source.clone(),
    };
    serde_json::to_string(&record).expect("records serialize")
}

/// Canonical text of a corpus: submissions first, then exemplars.
pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in &corpus.submissions {
        out.push_str(&submission_line(s));
        out.push('\n');
    }
    for e in &corpus.exemplars {
        out.push_str(&exemplar_line(e));
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    std::fs::write(path, write_corpus(corpus))
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Per-problem sample sizes for each outcome category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quotas(pub BTreeMap<Outcome, usize>);

impl Default for Quotas {
    fn default() -> Self {
        Quotas(BTreeMap::from([
            (Outcome::PassAll, 10),
            (Outcome::PassSome, 10),
            (Outcome::PassNone, 3),
            (Outcome::SyntaxError, 3),
        ]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Shortfall {
    pub problem: String,
    pub outcome: Outcome,
    pub wanted: usize,
    pub available: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Sample {
    /// Selected submissions grouped by problem (first-appearance order),
    /// in input order within each group.
    pub selected: Vec<Submission>,
    pub shortfalls: Vec<Shortfall>,
    /// Ids removed as structural duplicates before sampling.
    pub deduplicated: Vec<String>,
}

/// Samples up to the quota per (problem, outcome). PassAll and PassSome
/// pools are deduplicated structurally before sampling.
pub fn stratified_sample(submissions: &[Submission], quotas: &Quotas, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut problems: Vec<&str> = Vec::new();
    let mut pools: HashMap<(&str, Outcome), Vec<usize>> = HashMap::new();
    for (i, s) in submissions.iter().enumerate() {
        if !problems.contains(&s.problem.as_str()) {
            problems.push(&s.problem);
        }
        pools.entry((s.problem.as_str(), s.outcome)).or_default().push(i);
    }

    let mut sample = Sample::default();
    for problem in problems {
        let mut chosen: Vec<usize> = Vec::new();
        for outcome in Outcome::ALL {
            let quota = quotas.0.get(&outcome).copied().unwrap_or(0);
            let mut pool = pools.get(&(problem, outcome)).cloned().unwrap_or_default();
            if outcome.passes_some_test() {
                let subs: Vec<Submission> = pool.iter().map(|&i| submissions[i].clone()).collect();
                let deduped = crate::ast::dedup(&subs);
                sample.deduplicated.extend(deduped.duplicates.into_iter().map(|d| d.id));
                let kept: HashSet<&str> = deduped.kept.iter().map(|s| s.id.as_str()).collect();
                pool.retain(|&i| kept.contains(submissions[i].id.as_str()));
            }
            if pool.len() < quota {
                sample.shortfalls.push(Shortfall {
                    problem: problem.to_string(),
                    outcome,
                    wanted: quota,
                    available: pool.len(),
                });
            }
            pool.shuffle(&mut rng);
            pool.truncate(quota);
            chosen.extend(pool);
        }
        chosen.sort_unstable();
        sample.selected.extend(chosen.into_iter().map(|i| submissions[i].clone()));
    }
    sample
}
