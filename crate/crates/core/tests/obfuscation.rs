use std::path::Path;

use proptest::prelude::*;

use planlens::ast::{fingerprint_source, parse};
use planlens::catalog::Catalog;
use planlens::corpus::{load_corpus, Outcome};
use planlens::obfuscate::{is_builtin, obfuscate, obfuscate_corpus, ObfuscateError};
use planlens::rules::detect_rules;

fn corpus_path() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_corpus.jsonl"))
}

fn assert_invariant(id: &str, source: &str, seed: Option<u64>) {
    let before = parse(source);
    let (renamed, map) = obfuscate(source, seed).unwrap_or_else(|e| panic!("{id}: {e}"));
    let after = parse(&renamed);
    assert_eq!(before.status, after.status, "{id}");
    assert_eq!(detect_rules(&before).labels, detect_rules(&after).labels, "{id}:\n{renamed}");
    assert_eq!(fingerprint_source(source), fingerprint_source(&renamed), "{id}:\n{renamed}");
    for r in &map.renames {
        assert!(!is_builtin(&r.from), "{id}: renamed builtin {}", r.from);
    }
}

#[test]
fn mini_corpus_is_invariant_under_obfuscation() {
    let (corpus, _) = load_corpus(corpus_path()).unwrap();
    for s in &corpus.submissions {
        assert_invariant(&s.id, &s.source, None);
        assert_invariant(&s.id, &s.source, Some(17));
    }
}

#[test]
fn catalog_snippets_are_invariant_under_obfuscation() {
    for snippet in Catalog::builtin().snippets() {
        assert_invariant(&snippet.id, &snippet.source, None);
    }
}

#[test]
fn corpus_obfuscation_respects_outcome_categories() {
    let (corpus, _) = load_corpus(corpus_path()).unwrap();
    let lenient = obfuscate_corpus(&corpus.submissions, Some(3), false).unwrap();
    let eligible = corpus.submissions.iter().filter(|s| s.outcome.passes_some_test()).count();
    assert_eq!(lenient.items.len(), eligible);
    assert_eq!(lenient.items.len() + lenient.rejected.len(), corpus.submissions.len());
    for (sub, map) in &lenient.items {
        assert!(matches!(sub.outcome, Outcome::PassAll | Outcome::PassSome));
        assert!(map.seed.is_some());
    }
    let again = obfuscate_corpus(&corpus.submissions, Some(3), false).unwrap();
    let sources =
        |c: &planlens::obfuscate::ObfuscatedCorpus| c.items.iter().map(|(s, _)| s.source.clone()).collect::<Vec<_>>();
    assert_eq!(sources(&lenient), sources(&again));

    let strict = obfuscate_corpus(&corpus.submissions, Some(3), true);
    assert!(matches!(strict, Err(ObfuscateError::CategoryViolation(_))));
}

fn ident() -> BoxedStrategy<String> {
    prop_oneof![
        Just("total".to_string()),
        Just("items".to_string()),
        Just("x".to_string()),
        Just("best".to_string()),
        Just("len".to_string()),
        Just("var2".to_string()),
        "[a-z][a-z0-9_]{0,6}".prop_filter("keyword", |s| {
            !matches!(
                s.as_str(),
                "if" | "in"
                    | "is"
                    | "or"
                    | "and"
                    | "not"
                    | "for"
                    | "def"
                    | "del"
                    | "try"
                    | "as"
                    | "else"
                    | "elif"
                    | "with"
                    | "from"
                    | "pass"
                    | "while"
                    | "break"
                    | "class"
                    | "raise"
                    | "yield"
                    | "async"
                    | "await"
                    | "global"
                    | "lambda"
                    | "return"
                    | "assert"
                    | "import"
                    | "except"
                    | "finally"
                    | "continue"
                    | "nonlocal"
            )
        }),
    ]
    .boxed()
}

fn statement(depth: u32) -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        (ident(), ident()).prop_map(|(a, b)| format!("{a} = {b} + 1")),
        (ident(), ident()).prop_map(|(a, b)| format!("{a} += {b}")),
        (ident(), ident()).prop_map(|(a, b)| format!("print({a}, len({b}))")),
        (ident(), ident(), ident()).prop_map(|(a, b, c)| format!("{a} = [{b} for {b} in {c} if {b} % 2 == 0]")),
        (ident(), ident()).prop_map(|(a, b)| format!("{a}.append(f'{{{b}}}')")),
    ]
    .boxed();
    if depth == 0 {
        return leaf.boxed();
    }
    let body = prop::collection::vec(statement(depth - 1), 1..3);
    prop_oneof![
        leaf,
        (ident(), ident(), body.clone()).prop_map(|(a, b, s)| format!("for {a} in {b}:\n{}", indent(&s))),
        (ident(), ident(), body.clone()).prop_map(|(a, b, s)| format!("if {a} > {b}:\n{}", indent(&s))),
        (ident(), ident(), body).prop_map(|(f, p, s)| format!("def {f}({p}):\n{}\n    return {p}", indent(&s))),
    ]
    .boxed()
}

fn indent(stmts: &[String]) -> String {
    stmts.iter().flat_map(|s| s.lines()).map(|l| format!("    {l}")).collect::<Vec<_>>().join("\n")
}

fn program() -> impl Strategy<Value = String> {
    prop::collection::vec(statement(2), 1..5).prop_map(|v| v.join("\n") + "\n")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn obfuscation_preserves_structure_and_is_idempotent(src in program(), seed in any::<Option<u64>>()) {
        let (once, map) = obfuscate(&src, seed).unwrap();
        prop_assert_eq!(fingerprint_source(&once), fingerprint_source(&src));
        prop_assert_eq!(detect_rules(&parse(&once)).labels, detect_rules(&parse(&src)).labels);
        let (twice, _) = obfuscate(&once, seed).unwrap();
        prop_assert_eq!(fingerprint_source(&twice), fingerprint_source(&once));
        if seed.is_none() {
            prop_assert_eq!(&twice, &once);
        }
        let mut targets: Vec<&str> = map.renames.iter().map(|r| r.to.as_str()).collect();
        targets.sort();
        targets.dedup();
        prop_assert_eq!(targets.len(), map.renames.len());
        for r in &map.renames {
            prop_assert!(!is_builtin(&r.from));
        }
    }
}
