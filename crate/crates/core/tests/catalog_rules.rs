use planlens::ast::parse;
use planlens::catalog::Catalog;
use planlens::rules::detect_rules;

#[test]
fn catalog_snippet_labels_agree_with_rules() {
    let catalog = Catalog::builtin();
    let mut mismatches = Vec::new();
    for s in catalog.snippets() {
        let outcome = parse(&s.source);
        assert!(outcome.dropped_lines.is_empty(), "{} does not parse cleanly", s.id);
        let got = detect_rules(&outcome).labels;
        if got != s.labels {
            mismatches.push(format!("{}: labeled `{}`, rules say `{}`", s.id, s.labels, got));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}
