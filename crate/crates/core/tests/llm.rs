mod common;

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use common::stub::{chat_response, submitted_program, StubServer};
use planlens::cache::ResponseCache;
use planlens::catalog::Catalog;
use planlens::corpus::load_corpus;
use planlens::http::RetryPolicy;
use planlens::llm::{LlmConfig, LlmDetector, LlmError, PromptBundle, PromptMode};
use planlens::taxonomy::PlanLabelSet;

fn config(url: &str) -> LlmConfig {
    let mut c = LlmConfig::new(url, "stub-model");
    c.retry = RetryPolicy { max_attempts: 3, backoff: Duration::from_millis(1), timeout: Duration::from_secs(5) };
    c
}

fn detector(url: &str, cache: ResponseCache<String>) -> LlmDetector {
    LlmDetector::new(config(url), PromptBundle::fewshot(&Catalog::builtin()).unwrap(), cache).unwrap()
}

/// Answers each program with the fixture completion keyed by its text.
fn fixture_server(fixtures: HashMap<String, String>) -> StubServer {
    StubServer::start(move |path, body| {
        assert_eq!(path, "/chat/completions");
        assert_eq!(body["temperature"], 0.0);
        let program = submitted_program(body);
        (200, chat_response(fixtures.get(&program).map_or("UNKNOWN", String::as_str)))
    })
}

#[test]
fn fixture_completions_become_labels_and_are_cached() {
    let fixtures = HashMap::from([
        ("s = sum(xs)".to_string(), "sum, processAllItems".to_string()),
        ("print('hi')".to_string(), "UNKNOWN".to_string()),
    ]);
    let server = fixture_server(fixtures);
    let det = detector(&server.url, ResponseCache::in_memory());

    let out = det.detect("s = sum(xs)").unwrap();
    assert_eq!(out.labels, "sum, processAllItems".parse().unwrap());
    assert_eq!(out.completion, "sum, processAllItems");
    assert!(!out.cached);
    assert_eq!(det.detect("print('hi')").unwrap().labels, PlanLabelSet::unknown());
    assert_eq!(det.requests(), 2);

    let again = det.detect("s = sum(xs)").unwrap();
    assert!(again.cached);
    assert_eq!(again.completion, out.completion);
    assert_eq!(det.requests(), 2);
    assert_eq!(server.hits(), 2);
}

#[test]
fn unreadable_answer_is_reprompted_once() {
    let server = StubServer::start(|_, body| {
        let n = body["messages"].as_array().unwrap().len();
        let program = submitted_program(body);
        let answer = match (program.as_str(), n) {
            ("fixable", 2) => "I think this is a sum.",
            ("fixable", _) => "sum",
            _ => "no idea",
        };
        (200, chat_response(answer))
    });
    let det = detector(&server.url, ResponseCache::in_memory());
    let out = det.detect("fixable").unwrap();
    assert_eq!(out.labels, "sum".parse().unwrap());
    assert_eq!(det.requests(), 2);
    let reprompt = &server.bodies()[1]["messages"];
    assert_eq!(reprompt.as_array().unwrap().len(), 4);
    assert_eq!(reprompt[2]["role"], "assistant");

    match det.detect("hopeless") {
        Err(LlmError::LabelParseFailure { raw }) => assert_eq!(raw, "no idea"),
        other => panic!("expected LabelParseFailure, got {other:?}"),
    }
    assert_eq!(det.requests(), 4);
    // Failures are not cached.
    assert!(det.detect("hopeless").is_err());
    assert_eq!(det.requests(), 6);
}

#[test]
fn batch_dedups_and_keeps_order() {
    let fixtures: HashMap<String, String> = (0..10)
        .map(|i| (format!("x = {i}"), if i % 2 == 0 { "counting".to_string() } else { "sum".to_string() }))
        .collect();
    let server = fixture_server(fixtures);
    let det = detector(&server.url, ResponseCache::in_memory());
    let sources: Vec<String> = (0..30).map(|i| format!("x = {}", i % 10)).collect();
    let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
    let out = det.detect_batch(&refs);
    assert_eq!(out.len(), 30);
    for (i, r) in out.iter().enumerate() {
        let want = if (i % 10) % 2 == 0 { "counting" } else { "sum" };
        let r = r.as_ref().unwrap();
        assert_eq!(r.labels, want.parse().unwrap());
        assert_eq!(r.cached, i >= 10);
    }
    assert_eq!(det.requests(), 10);
}

#[test]
fn persistent_cache_survives_restart() {
    let dir = std::env::temp_dir().join(format!("planlens-llm-cache-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cache.jsonl");
    let _ = std::fs::remove_file(&path);
    let server = fixture_server(HashMap::from([("a = 1".to_string(), "UNKNOWN".to_string())]));
    let first = detector(&server.url, ResponseCache::open(&path).unwrap());
    first.detect("a = 1").unwrap();
    drop(first);
    let second = detector(&server.url, ResponseCache::open(&path).unwrap());
    assert!(second.detect("a = 1").unwrap().cached);
    assert_eq!(second.requests(), 0);
    assert_eq!(server.hits(), 1);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn server_errors_surface_after_retries() {
    let server = StubServer::start(|_, _| (500, "{}".into()));
    let det = detector(&server.url, ResponseCache::in_memory());
    assert!(matches!(det.detect("x = 1"), Err(LlmError::Transport(_))));
    assert_eq!(server.hits(), 3);
}

#[test]
fn finetuned_mode_sends_the_short_prompt() {
    let server = fixture_server(HashMap::new());
    let mut c = config(&server.url);
    c.mode = PromptMode::Finetuned;
    let bundle = PromptBundle::short(&Catalog::builtin());
    let det = LlmDetector::new(c, bundle, ResponseCache::in_memory()).unwrap();
    det.detect("y = 2").unwrap();
    let system = server.bodies()[0]["messages"][0]["content"].as_str().unwrap().to_string();
    assert!(!system.contains("### Example"));
    assert!(system.contains("- UNKNOWN: "));
}

#[test]
fn prompt_contains_no_evaluation_sources() {
    let path = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_corpus.jsonl"));
    let (corpus, _) = load_corpus(path).unwrap();
    let text = PromptBundle::fewshot(&Catalog::builtin()).unwrap().text();
    for s in &corpus.submissions {
        assert!(!text.contains(s.source.trim()), "{} leaks into the prompt", s.id);
    }
}
