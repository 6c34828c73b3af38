//! Plan catalog: goal text and instructor-authored exemplar snippets.
//!
//! The catalog lives in a human-editable text file:
//!
//! ```text
//! catalog-version: 1
//!
//! [plan sum]
//! goal: Compute the total of items from a collection
//!
//! [snippet sum-1]
//! labels: processAllItems, sum
//! ~~~
//! total = 0
//! for price in prices:
//!     total += price
//! ~~~
//!
//! [plan UNKNOWN]
//! rule: Use when no known plan could apply to the submission
//! ```
//!
//! Snippets belong to the nearest preceding `[plan ...]` header. Lines
//! starting with `#` outside a code fence are comments.

use std::path::Path;

use thiserror::Error;

use crate::taxonomy::{parse_labels, LabelError, PlanId, PlanLabelSet};

pub const BUILTIN_CATALOG: &str = include_str!("../data/catalog.v1.txt");

/// Minimum number of exemplar snippets per named plan.
pub const SNIPPETS_PER_PLAN: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub id: String,
    pub labels: PlanLabelSet,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanCatalogEntry {
    pub id: PlanId,
    /// For named plans the goal; for `UNKNOWN` the rule sentence.
    pub goal_text: String,
    pub exemplar_snippets: Vec<Snippet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    pub version: u32,
    entries: Vec<PlanCatalogEntry>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("catalog line {line}: {source}")]
    Labels {
        line: usize,
        #[source]
        source: LabelError,
    },
    #[error("catalog is missing plan `{0}`")]
    MissingPlan(PlanId),
    #[error("plan `{0}` appears more than once")]
    DuplicatePlan(PlanId),
    #[error("duplicate snippet id `{0}`")]
    DuplicateSnippet(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Catalog {
    pub fn builtin() -> Catalog {
        Catalog::parse(BUILTIN_CATALOG).expect("bundled catalog is well-formed")
    }

    pub fn load(path: &Path) -> Result<Catalog, CatalogError> {
        Catalog::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Catalog, CatalogError> {
        let mut version = None;
        let mut entries: Vec<PlanCatalogEntry> = Vec::new();
        let mut pending: Option<(usize, String, Option<PlanLabelSet>)> = None;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        while let Some((lineno, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: &str| CatalogError::Syntax { line: lineno, reason: reason.to_string() };

            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if pending.is_some() {
                    return Err(syntax("snippet header without a code block"));
                }
                let (kind, name) = header
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| syntax("section header needs a kind and a name"))?;
                let name = name.trim();
                match kind {
                    "plan" => {
                        let id = PlanId::lookup(name).ok_or_else(|| syntax(&format!("unknown plan `{name}`")))?;
                        if entries.iter().any(|e| e.id == id) {
                            return Err(CatalogError::DuplicatePlan(id));
                        }
                        entries.push(PlanCatalogEntry { id, goal_text: String::new(), exemplar_snippets: Vec::new() });
                    }
                    "snippet" => {
                        if entries.is_empty() {
                            return Err(syntax("snippet before any plan"));
                        }
                        pending = Some((lineno, name.to_string(), None));
                    }
                    other => return Err(syntax(&format!("unknown section kind `{other}`"))),
                }
                continue;
            }

            if line == "~~~" {
                let (_, id, labels) = pending.take().ok_or_else(|| syntax("code fence outside a snippet"))?;
                let labels = labels.ok_or_else(|| syntax("snippet has no labels line"))?;
                let mut source = String::new();
                loop {
                    match lines.next() {
                        Some((_, l)) if l.trim_end() == "~~~" => break,
                        Some((_, l)) => {
                            source.push_str(l);
                            source.push('\n');
                        }
                        None => return Err(syntax("unterminated code fence")),
                    }
                }
                let entry = entries.last_mut().expect("checked when the snippet opened");
                entry.exemplar_snippets.push(Snippet { id, labels, source });
                continue;
            }

            let (key, value) = line.split_once(':').ok_or_else(|| syntax("expected `key: value`"))?;
            let value = value.trim();
            match (key.trim(), pending.as_mut()) {
                ("labels", Some((_, _, labels))) => {
                    let parsed = parse_labels(value).map_err(|source| CatalogError::Labels { line: lineno, source })?;
                    *labels = Some(parsed);
                }
                ("catalog-version", None) => {
                    version = Some(value.parse().map_err(|_| syntax("catalog-version must be an integer"))?);
                }
                ("goal" | "rule", None) => {
                    let entry = entries.last_mut().ok_or_else(|| syntax("goal before any plan"))?;
                    entry.goal_text = value.to_string();
                }
                (other, _) => return Err(syntax(&format!("unexpected key `{other}`"))),
            }
        }
        if let Some((line, _, _)) = pending {
            return Err(CatalogError::Syntax { line, reason: "snippet header without a code block".into() });
        }

        let mut seen = std::collections::HashSet::new();
        for s in entries.iter().flat_map(|e| &e.exemplar_snippets) {
            if !seen.insert(s.id.as_str()) {
                return Err(CatalogError::DuplicateSnippet(s.id.clone()));
            }
        }
        for id in PlanId::ALL {
            if !entries.iter().any(|e| e.id == id) {
                return Err(CatalogError::MissingPlan(id));
            }
        }
        entries.sort_by_key(|e| e.id);
        Ok(Catalog {
            version: version.ok_or(CatalogError::Syntax { line: 1, reason: "missing catalog-version".into() })?,
            entries,
        })
    }

    /// All ten entries in catalog order, `UNKNOWN` last.
    pub fn entries(&self) -> &[PlanCatalogEntry] {
        &self.entries
    }

    pub fn entry(&self, id: PlanId) -> &PlanCatalogEntry {
        &self.entries[id.index()]
    }

    /// Every snippet of the named plans, in catalog order.
    pub fn snippets(&self) -> impl Iterator<Item = &Snippet> {
        self.entries.iter().flat_map(|e| e.exemplar_snippets.iter())
    }

    /// Named plans with fewer than the required number of snippets.
    pub fn incomplete_plans(&self) -> Vec<PlanId> {
        self.entries
            .iter()
            .filter(|e| e.id != PlanId::Unknown && e.exemplar_snippets.len() < SNIPPETS_PER_PLAN)
            .map(|e| e.id)
            .collect()
    }

    pub fn entry_mut(&mut self, id: PlanId) -> &mut PlanCatalogEntry {
        &mut self.entries[id.index()]
    }
}

/// The bundled catalog's entries.
pub fn catalog() -> Vec<PlanCatalogEntry> {
    Catalog::builtin().entries
}
