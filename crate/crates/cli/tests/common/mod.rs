#![allow(dead_code)]

#[path = "../../../core/tests/common/stub.rs"]
pub mod stub;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use planlens::corpus::{load_corpus, Corpus};
use stub::{chat_response, submitted_program, StubServer};

pub fn mini_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/mini_corpus.jsonl")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

pub fn load(path: &Path) -> Corpus {
    load_corpus(path).expect("corpus loads").0
}

/// Runs the CLI in-process; returns the exit code and what it printed.
pub fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["planlens"];
    argv.extend_from_slice(args);
    let code = planlens_cli::run(argv, &mut out);
    (code, String::from_utf8(out).expect("utf-8 output"))
}

pub fn arg(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Chat stub answering each mini-corpus program with its fixture
/// completion, keyed by source text.
pub fn llm_fixture_server() -> StubServer {
    let completions: HashMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(fixture("fixtures/llm_completions.json")).unwrap()).unwrap();
    let by_source: HashMap<String, String> = load(&mini_corpus())
        .submissions
        .into_iter()
        .map(|s| (s.source.trim_end().to_string(), completions[&s.id].clone()))
        .collect();
    StubServer::start(move |path, body| {
        assert_eq!(path, "/chat/completions");
        let program = submitted_program(body);
        match by_source.get(&program) {
            Some(c) => (200, chat_response(c)),
            None => (400, "{\"error\":\"unknown program\"}".into()),
        }
    })
}
