//! Parsing, repair, canonicalization and structural dedup of Python source.

pub mod canonical;
pub mod lexer;
pub mod node;
pub mod parser;
pub mod span;
pub mod tree;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Submission;

pub use canonical::StructuralFingerprint;
pub use node::Node;
pub use span::{Pos, Span};
pub use tree::Module;

/// Upper bound on lines blanked while repairing one submission.
pub const MAX_REPAIR_DROPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("line {line}, column {col}: {message}")]
pub struct SyntaxError {
    pub message: String,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Clean,
    Repaired,
    Failed,
}

/// A parsed program plus its uniform node view.
#[derive(Debug, Clone)]
pub struct SyntaxTree {
    /// The text that was parsed; after repair, dropped lines are blanked
    /// with spaces so offsets still match the original.
    pub source: String,
    pub module: Module,
    pub root: Node,
}

impl SyntaxTree {
    pub fn new(source: String, module: Module) -> SyntaxTree {
        let root = node::build(&module);
        SyntaxTree { source, module, root }
    }

    pub fn canonical(&self) -> String {
        canonical::serialize(&self.root)
    }

    pub fn fingerprint(&self) -> StructuralFingerprint {
        fingerprint(self)
    }
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    pub tree: Option<SyntaxTree>,
    /// 1-based line numbers blanked during repair, in drop order.
    pub dropped_lines: Vec<u32>,
    /// The first error reported against the unmodified source.
    pub error: Option<SyntaxError>,
}

impl ParseOutcome {
    pub fn is_failed(&self) -> bool {
        self.status == ParseStatus::Failed
    }
}

/// Parses without repair.
pub fn parse_strict(source: &str) -> Result<SyntaxTree, SyntaxError> {
    parser::parse_module(source).map(|m| SyntaxTree::new(source.to_string(), m))
}

/// Parses `source`, repairing syntax errors by blanking the offending line
/// until the program parses or the drop budget runs out.
///
/// The budget is `min(10, ceil(lines / 4))` lines.
pub fn parse(source: &str) -> ParseOutcome {
    let first_error = match parse_strict(source) {
        Ok(tree) => {
            return ParseOutcome {
                status: ParseStatus::Clean,
                tree: Some(tree),
                dropped_lines: Vec::new(),
                error: None,
            }
        }
        Err(e) => e,
    };
    let line_count = source.lines().count();
    let budget = MAX_REPAIR_DROPS.min(line_count.div_ceil(4));
    let mut text = source.to_string();
    let mut dropped = Vec::new();
    let mut error = first_error.clone();
    while dropped.len() < budget {
        let Some(line) = line_to_drop(&text, error.line) else { break };
        text = blank_line(&text, line);
        dropped.push(line);
        match parser::parse_module(&text) {
            Ok(module) => {
                log::debug!("repaired by dropping lines {dropped:?}");
                return ParseOutcome {
                    status: ParseStatus::Repaired,
                    tree: Some(SyntaxTree::new(text, module)),
                    dropped_lines: dropped,
                    error: Some(first_error),
                };
            }
            Err(e) => error = e,
        }
    }
    ParseOutcome { status: ParseStatus::Failed, tree: None, dropped_lines: dropped, error: Some(first_error) }
}

/// The reported line, or the closest non-blank line above it when the
/// parser points at a blank line or past the end of input.
fn line_to_drop(text: &str, reported: u32) -> Option<u32> {
    let lines: Vec<&str> = text.lines().collect();
    let mut line = (reported as usize).min(lines.len());
    while line >= 1 {
        if !lines[line - 1].trim().is_empty() {
            return Some(line as u32);
        }
        line -= 1;
    }
    None
}

fn blank_line(text: &str, line: u32) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line as usize {
            let body = l.trim_end_matches(['\n', '\r']);
            out.extend(std::iter::repeat_n(' ', body.len()));
            out.push_str(&l[body.len()..]);
        } else {
            out.push_str(l);
        }
    }
    out
}

pub fn fingerprint(tree: &SyntaxTree) -> StructuralFingerprint {
    StructuralFingerprint::of_serialization(&tree.canonical())
}

/// Fingerprint of `source`, if it parses (after repair).
pub fn fingerprint_source(source: &str) -> Option<StructuralFingerprint> {
    parse(source).tree.map(|t| t.fingerprint())
}

/// Node-kind path n-gram counts; see [`canonical::path_ngrams`].
pub fn node_kind_profile(tree: &SyntaxTree, n: usize) -> BTreeMap<String, u64> {
    canonical::path_ngrams(&tree.root, n)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DuplicateOf {
    pub id: String,
    pub kept: String,
}

#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    /// First submission per fingerprint plus every unparseable submission,
    /// in input order.
    pub kept: Vec<Submission>,
    pub duplicates: Vec<DuplicateOf>,
    /// Ids of submissions whose parse failed; they are kept untouched.
    pub unparsed: Vec<String>,
}

pub fn dedup(submissions: &[Submission]) -> DedupOutcome {
    let mut seen: HashMap<StructuralFingerprint, &str> = HashMap::new();
    let mut out = DedupOutcome::default();
    for sub in submissions {
        match fingerprint_source(&sub.source) {
            None => {
                out.unparsed.push(sub.id.clone());
                out.kept.push(sub.clone());
            }
            Some(fp) => match seen.get(&fp) {
                Some(kept) => out.duplicates.push(DuplicateOf { id: sub.id.clone(), kept: kept.to_string() }),
                None => {
                    seen.insert(fp, &sub.id);
                    out.kept.push(sub.clone());
                }
            },
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(src: &str, n: usize) -> BTreeMap<String, u64> {
        node_kind_profile(&parse_strict(src).unwrap(), n)
    }

    #[test]
    fn clean_parse_of_minimal_programs() {
        let out = parse("x = 1");
        assert_eq!(out.status, ParseStatus::Clean);
        assert!(out.dropped_lines.is_empty());
        let tree = out.tree.unwrap();
        assert_eq!(tree.root.children.len(), 1);
        assert_eq!(tree.root.children[0].kind, "assignment");

        let out = parse("");
        assert_eq!(out.status, ParseStatus::Clean);
        assert!(out.tree.unwrap().root.children.is_empty());
    }

    #[test]
    fn missing_colon_is_never_clean() {
        let out = parse("for x in xs\n    s += x");
        assert_ne!(out.status, ParseStatus::Clean);
        assert_eq!(out.error.as_ref().unwrap().line, 1);
    }

    #[test]
    fn repair_blanks_the_reported_line() {
        let src = "total = 0\nfor x in xs:\n    total += x\nprint(total\nz = 1\n";
        let out = parse(src);
        assert_eq!(out.status, ParseStatus::Repaired);
        assert_eq!(out.dropped_lines, vec![4]);
        let tree = out.tree.unwrap();
        assert_eq!(tree.source.len(), src.len());
        assert!(tree.source.lines().nth(3).unwrap().trim().is_empty());
    }

    #[test]
    fn repair_budget_is_a_quarter_of_the_lines() {
        // Four lines allow a single drop; this needs two.
        let out = parse("x = (\ny = [\na = 1\nb = 2\n");
        assert_eq!(out.status, ParseStatus::Failed);
        assert_eq!(out.dropped_lines.len(), 1);
        assert!(out.tree.is_none());
    }

    #[test]
    fn fingerprint_erases_identifiers_and_literals() {
        let fp = |s: &str| parse_strict(s).unwrap().fingerprint();
        assert_eq!(fp("a=1"), fp("b=1"));
        assert_eq!(fp("a=1"), fp("a=2"));
        assert_ne!(fp("a=1"), fp("a='1'"));
        assert_ne!(fp("a=1"), fp("a=1\nb=2"));
        assert_eq!(fp("x = 1  # note\n\n"), fp("y=7"));
        assert_eq!(fp("def f():\n    '''doc'''\n    return 1\n"), fp("def g():\n    return 2\n"));
        assert_ne!(fp("a + b"), fp("a - b"));
    }

    #[test]
    fn canonical_dump_shape() {
        let tree = parse_strict("t = 0\nfor x in xs:\n    t += x\n").unwrap();
        assert_eq!(
            tree.canonical(),
            "module\n  assignment\n    name\n    literal[int]\n  for\n    name\n    name\n    augmented-assignment[+]\n      name\n      name\n"
        );
    }

    #[test]
    fn profile_counts() {
        let expected: BTreeMap<String, u64> = [("module", 1), ("assignment", 1), ("name", 1), ("literal", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        assert_eq!(profile("x = 1", 1), expected);
        assert_eq!(profile("", 1), BTreeMap::from([("module".to_string(), 1)]));
        let p2 = profile("x = 1", 2);
        assert_eq!(p2.values().sum::<u64>(), 3);
        assert_eq!(p2["assignment>literal"], 1);
        assert_eq!(profile("x = 1", 3).values().sum::<u64>(), 2);
        assert_eq!(profile("count = 1", 2), profile("x = 1", 2));
    }

    #[test]
    fn spans_nest() {
        let src = "def f(a, b=2):\n    if a and (b or a):\n        return [x * 2 for x in a if x]\n    return f'{a!r:>{b}}'\n";
        let tree = parse_strict(src).unwrap();
        fn check(n: &Node, src: &str) {
            assert!(n.span.end.offset <= src.len());
            for c in &n.children {
                assert!(n.span.contains(&c.span), "{} {} not within {} {}", c.kind, c.span, n.kind, n.span);
                check(c, src);
            }
        }
        check(&tree.root, src);
    }
}
