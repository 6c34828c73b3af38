mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{arg, load, mini_corpus, run};
use planlens::corpus::{save_corpus, Corpus, Outcome};
use planlens_cli::detections::Detections;

fn planlens(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_planlens"));
    cmd.args(args).env_remove("PLANLENS_BACKEND").env_remove("PLANLENS_ENDPOINT").env_remove("PLANLENS_MODEL");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn detect(backend: &str, corpus: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["detect", "--backend", backend, "--corpus", arg(corpus), "--out", arg(out)];
    args.extend_from_slice(extra);
    planlens(&args, &[("SOURCE_DATE_EPOCH", "1700000000")])
}

#[test]
fn rules_detection_covers_the_corpus_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rules.jsonl");
    let o = detect("rules", &mini_corpus(), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = Detections::load(&out).unwrap();
    assert_eq!(d.header.created, 1_700_000_000);
    let ids: Vec<String> = load(&mini_corpus()).submissions.into_iter().map(|s| s.id).collect();
    assert_eq!(d.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), ids);
    assert!(d.records.iter().all(|r| r.details.get("evidence").is_some() && r.timestamp == 1_700_000_000));
}

#[test]
fn rules_and_knn_output_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    for backend in ["rules", "knn"] {
        let a = dir.path().join(format!("{backend}-1.jsonl"));
        let b = dir.path().join(format!("{backend}-4.jsonl"));
        detect(backend, &mini_corpus(), &a, &["--jobs", "1", "--seed", "9"]);
        detect(backend, &mini_corpus(), &b, &["--jobs", "4", "--seed", "9"]);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{backend}");
    }
}

#[test]
fn perfect_detections_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rules.jsonl");
    detect("rules", &mini_corpus(), &out, &[]);
    let (code, table) =
        run(&["eval", "--corpus", arg(&mini_corpus()), "--detections", arg(&out), "--out", arg(dir.path())]);
    assert_eq!(code, 0);
    let summary = table.lines().nth(2).unwrap();
    assert_eq!(summary.split_whitespace().collect::<Vec<_>>(), ["rules", "1.0000", "1.0000", "1.0000", "45"]);
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "rules,45,1,1,1,1,1,1,1");
    assert!(dir.path().join("per_plan.csv").exists());
}

#[test]
fn missing_ids_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rules.jsonl");
    detect("rules", &mini_corpus(), &out, &[]);
    let mut d = Detections::load(&out).unwrap();
    d.records.pop();
    d.save(&out).unwrap();
    let o = planlens(&["eval", "--corpus", arg(&mini_corpus()), "--detections", arg(&out)], &[]);
    assert_eq!(o.status.code(), Some(3));
    let o = planlens(&["compare", "--corpus", arg(&mini_corpus()), "--a", arg(&out), "--b", arg(&out)], &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let missing = dir.path().join("nope.jsonl");
    let o = detect("rules", &missing, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));

    let o = planlens(&["detect", "--corpus", arg(&mini_corpus()), "--out", arg(&out)], &[]);
    assert_eq!(o.status.code(), Some(2), "no backend");
    let o = planlens(&["detect", "--backend", "bogus"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = detect("knn", &mini_corpus(), &out, &["--k", "99"]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "colour = \"red\"\n").unwrap();
    let o = detect("rules", &mini_corpus(), &out, &["--config", arg(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn flags_override_config_file_which_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let out = dir.path().join("knn.jsonl");
    std::fs::write(
        &config,
        format!("backend = \"knn\"\nk = 5\ncorpus = {:?}\nout = {:?}\n", arg(&mini_corpus()), arg(&out)),
    )
    .unwrap();
    let o = planlens(&["detect", "--config", arg(&config), "--k", "1"], &[("PLANLENS_BACKEND", "rules")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = Detections::load(&out).unwrap();
    assert_eq!(d.header.backend, "knn");
    assert_eq!(d.header.settings["k"], 1);

    let o = planlens(&["detect", "--config", arg(&config)], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(Detections::load(&out).unwrap().header.settings["k"], 5);

    let plain = dir.path().join("plain.toml");
    std::fs::write(&plain, format!("corpus = {:?}\nout = {:?}\n", arg(&mini_corpus()), arg(&out))).unwrap();
    let o = planlens(&["detect", "--config", arg(&plain)], &[("PLANLENS_BACKEND", "rules")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(Detections::load(&out).unwrap().header.backend, "rules");
}

#[test]
fn obfuscate_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = load(&mini_corpus());
    let before = std::fs::read(mini_corpus()).unwrap();

    let out = dir.path().join("obf.jsonl");
    let o = planlens(&["obfuscate", "--corpus", arg(&mini_corpus()), "--out", arg(&out), "--strict"], &[]);
    assert_eq!(o.status.code(), Some(4));

    let o = planlens(&["obfuscate", "--corpus", arg(&mini_corpus()), "--out", arg(&out), "--seed", "3"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let passing = corpus.submissions.iter().filter(|s| s.outcome.passes_some_test()).count();
    let obf = load(&out);
    assert_eq!(obf.submissions.len(), passing);
    assert_eq!(stdout(&o).matches("skipped ").count(), corpus.submissions.len() - passing);
    let sidecar = std::fs::read_to_string(dir.path().join("obf.renames.jsonl")).unwrap();
    assert_eq!(sidecar.lines().count(), passing);
    assert!(sidecar.contains("\"seed\":"));
    assert_eq!(std::fs::read(mini_corpus()).unwrap(), before, "input was modified");

    // A PassAll-only corpus passes strict mode.
    let pass_all: Vec<_> = corpus.submissions.into_iter().filter(|s| s.outcome == Outcome::PassAll).collect();
    let clean = dir.path().join("pass_all.jsonl");
    save_corpus(&clean, &Corpus { submissions: pass_all, exemplars: Vec::new() }).unwrap();
    let strict_out = dir.path().join("strict.jsonl");
    let o = planlens(&["obfuscate", "--corpus", arg(&clean), "--out", arg(&strict_out), "--strict"], &[]);
    assert_eq!(o.status.code(), Some(0));

    let o = planlens(&["obfuscate", "--corpus", arg(&clean), "--out", arg(&clean)], &[]);
    assert_eq!(o.status.code(), Some(2), "overwriting the input must be refused");
}

#[test]
fn ablation_table_reports_zero_delta_for_rules() {
    let dir = tempfile::tempdir().unwrap();
    let obf = dir.path().join("obf.jsonl");
    planlens(&["obfuscate", "--corpus", arg(&mini_corpus()), "--out", arg(&obf), "--seed", "1"], &[]);
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    detect("rules", &mini_corpus(), &a, &[]);
    detect("rules", &obf, &b, &[]);
    let (code, text) = run(&["eval", "--corpus", arg(&mini_corpus()), "--detections", arg(&a), "--against", arg(&b)]);
    assert_eq!(code, 0);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("rules    1.0000 (+0.0000)"), "{last}");
}

#[test]
fn compare_reports_degenerate_and_adjusted_p() {
    let dir = tempfile::tempdir().unwrap();
    let (rules, knn) = (dir.path().join("rules.jsonl"), dir.path().join("knn.jsonl"));
    detect("rules", &mini_corpus(), &rules, &[]);
    detect("knn", &mini_corpus(), &knn, &[]);
    let corpus = mini_corpus();
    let c = arg(&corpus);
    let (code, text) = run(&["compare", "--corpus", c, "--a", arg(&rules), "--b", arg(&rules)]);
    assert_eq!(code, 0);
    assert!(text.contains("degenerate"), "{text}");

    let p = |text: &str, key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line[key.len()..].split_whitespace().next().unwrap().parse().unwrap()
    };
    let (_, one) = run(&["compare", "--corpus", c, "--a", arg(&rules), "--b", arg(&knn), "--method", "exact"]);
    let (_, five) =
        run(&["compare", "--corpus", c, "--a", arg(&rules), "--b", arg(&knn), "--method", "exact", "--m", "5"]);
    assert!(p(&one, "p = ") < 0.01, "{one}");
    assert_eq!(p(&one, "p = "), p(&five, "p = "));
    assert!((p(&five, "adjusted p = ") - (5.0 * p(&one, "p = ")).min(1.0)).abs() < 1e-6);
}

#[test]
fn index_build_then_detect_with_it() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("index.jsonl");
    let (code, msg) = run(&["index", "build", "--out", arg(&index)]);
    assert_eq!(code, 0);
    assert!(msg.starts_with("27 exemplars, provider structural"), "{msg}");
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    detect("knn", &mini_corpus(), &a, &[]);
    detect("knn", &mini_corpus(), &b, &["--index", arg(&index)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn dedup_sample_validate_and_finetune_export() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = mini_corpus();
    let c = arg(&corpus);
    let deduped = dir.path().join("dedup.jsonl");
    let (code, report) = run(&["dedup", "--corpus", c, "--out", arg(&deduped)]);
    assert_eq!(code, 0);
    let kept = load(&deduped).submissions.len();
    assert!(
        report.ends_with(&format!("{kept} kept, {} duplicates removed, 0 unparseable kept\n", 45 - kept)),
        "{report}"
    );

    let sampled = dir.path().join("sample.jsonl");
    assert_eq!(run(&["sample", "--corpus", c, "--out", arg(&sampled), "--seed", "4"]).0, 0);
    assert!(!load(&sampled).submissions.is_empty());

    let (code, manifest) = run(&["validate", "--corpus", c]);
    assert_eq!(code, 0);
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["submissions"], 45);

    let ft = dir.path().join("ft.jsonl");
    let (code, _) = run(&["finetune", "export", "--out", arg(&ft)]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&ft).unwrap().lines().count(), 27);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ft.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["records"], 27);
    let (code, _) = run(&["finetune", "export", "--out", arg(&ft), "--corpus", c]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&ft).unwrap().lines().count(), 45);
}
