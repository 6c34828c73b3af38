//! One function per subcommand.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use planlens::cache::ResponseCache;
use planlens::catalog::Catalog;
use planlens::corpus::{load_corpus, save_corpus, stratified_sample, Corpus, Exemplar, Quotas, Submission};
use planlens::detector::{Detector, KnnDetector, RulesDetector};
use planlens::eval::report::{ablation_table, per_plan_csv, render_report, summary_csv};
use planlens::eval::{
    ablation_delta, per_submission_f1, wilcoxon_signed_rank_with, EvalError, LabeledPair, MetricsReport, PMethod,
};
use planlens::http::RetryPolicy;
use planlens::knn::{
    build_index, EmbeddingProvider, ExemplarIndex, KnnError, RemoteConfig, RemoteProvider, StructuralProvider,
    DEFAULT_K, STRUCTURAL,
};
use planlens::llm::{
    export_finetune_dataset, export_finetune_from_submissions, finetune_jsonl, LlmConfig, LlmDetector, LlmError,
    PromptBundle, PromptMode,
};
use planlens::obfuscate::obfuscate_corpus;
use planlens::taxonomy::PlanLabelSet;
use serde_json::json;

use crate::config::{Backend, Mode, Provider, Settings};
use crate::detections::{creation_time, Detections, Header, Record, FORMAT};
use crate::{
    CliError, Command, CompareArgs, DedupArgs, DetectArgs, EvalArgs, FinetuneCommand, IndexCommand, ObfuscateArgs,
    PValue, PromptCommand, SampleArgs, ValidateArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Detect(args) => detect(args, out),
        Command::Eval(args) => eval(args, out),
        Command::Obfuscate(args) => obfuscate(args, out),
        Command::Compare(args) => compare(args, out),
        Command::Dedup(args) => dedup(args, out),
        Command::Sample(args) => sample(args, out),
        Command::Validate(args) => validate(args, out),
        Command::Prompt(PromptCommand::Export { out: path, mode, catalog }) => prompt_export(&path, mode, catalog, out),
        Command::Finetune(FinetuneCommand::Export { out: path, corpus, exemplars, catalog }) => {
            finetune_export(&path, corpus, exemplars, catalog, out)
        }
        Command::Index(IndexCommand::Build(args)) => index_build(args, out),
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io { path: "<stdout>".into(), message: e.to_string() })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Refuses to overwrite an input.
fn distinct(out: &Path, inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    if inputs.iter().any(|i| canon(i) == canon(out)) {
        return Err(CliError::Config(format!("output {} would overwrite an input", out.display())));
    }
    Ok(())
}

fn load(path: &Path) -> Result<Corpus> {
    if !path.exists() {
        return Err(CliError::Config(format!("{} does not exist", path.display())));
    }
    Ok(load_corpus(path)?.0)
}

fn catalog(path: &Option<PathBuf>) -> Result<Catalog> {
    match path {
        Some(p) => Catalog::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => Ok(Catalog::builtin()),
    }
}

fn exemplars(path: &Option<PathBuf>, catalog: &Catalog) -> Result<Vec<Exemplar>> {
    match path {
        Some(p) => {
            let corpus = load(p)?;
            if corpus.exemplars.is_empty() {
                return Err(CliError::Config(format!("{} holds no exemplar records", p.display())));
            }
            Ok(corpus.exemplars)
        }
        None => Ok(Exemplar::from_catalog(catalog)),
    }
}

fn retry(s: &Settings) -> RetryPolicy {
    let d = RetryPolicy::default();
    RetryPolicy {
        max_attempts: s.attempts.unwrap_or(d.max_attempts),
        backoff: s.backoff_ms.map_or(d.backoff, Duration::from_millis),
        timeout: s.timeout.map_or(d.timeout, Duration::from_secs),
    }
}

fn open_cache<V: serde::Serialize + serde::de::DeserializeOwned + Clone>(
    path: &Option<PathBuf>,
) -> Result<ResponseCache<V>> {
    match path {
        Some(p) => ResponseCache::open(p).map_err(|e| CliError::io(p, e)),
        None => Ok(ResponseCache::in_memory()),
    }
}

fn remote_provider(s: &Settings) -> Result<RemoteProvider> {
    let endpoint = Settings::require(&s.endpoint, "endpoint")?;
    let model = Settings::require(&s.model, "model")?;
    let mut config = RemoteConfig::new(endpoint, model);
    config.retry = retry(s);
    Ok(RemoteProvider::new(config, open_cache(&s.cache)?))
}

fn knn_error(e: KnnError) -> CliError {
    match e {
        KnnError::EmptyExemplars
        | KnnError::BadK { .. }
        | KnnError::ProviderMismatch { .. }
        | KnnError::Format { .. } => CliError::Config(e.to_string()),
        other => CliError::Failed(other.to_string()),
    }
}

fn llm_error(e: LlmError) -> CliError {
    match e {
        LlmError::IncompleteCatalog(_) | LlmError::InvalidConfig(_) | LlmError::MissingLabels(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Failed(other.to_string()),
    }
}

fn prompt_mode(mode: Mode) -> PromptMode {
    match mode {
        Mode::Fewshot => PromptMode::Fewshot,
        Mode::Finetuned => PromptMode::Finetuned,
    }
}

/// A detector plus the settings recorded in the detection header.
type Built = (Box<dyn Detector>, serde_json::Map<String, serde_json::Value>);

fn knn_detector(s: &Settings) -> Result<Built> {
    let k = s.k.unwrap_or(DEFAULT_K);
    let (index, provider): (ExemplarIndex, Box<dyn EmbeddingProvider>) = match &s.index {
        Some(path) => {
            let index = ExemplarIndex::load(path).map_err(knn_error)?;
            let provider: Box<dyn EmbeddingProvider> = if index.provider == STRUCTURAL {
                Box::new(index.structural_provider().expect("structural index carries its IDF table"))
            } else {
                let remote = remote_provider(s)?;
                if remote.name() != index.provider {
                    return Err(knn_error(KnnError::ProviderMismatch {
                        index: index.provider.clone(),
                        provider: remote.name(),
                    }));
                }
                Box::new(remote)
            };
            (index, provider)
        }
        None => {
            let ex = exemplars(&s.exemplars, &catalog(&s.catalog)?)?;
            match s.provider.unwrap_or(Provider::Structural) {
                Provider::Structural => {
                    let sources: Vec<&str> = ex.iter().map(|e| e.source.as_str()).collect();
                    let provider = StructuralProvider::fit(&sources);
                    (build_index(&ex, &provider).map_err(knn_error)?, Box::new(provider))
                }
                Provider::Remote => {
                    let provider = remote_provider(s)?;
                    (build_index(&ex, &provider).map_err(knn_error)?, Box::new(provider))
                }
            }
        }
    };
    if k == 0 || k > index.entries.len() {
        return Err(knn_error(KnnError::BadK { k, size: index.entries.len() }));
    }
    let mut settings = serde_json::Map::new();
    settings.insert("k".into(), json!(k));
    settings.insert("provider".into(), json!(index.provider));
    settings.insert("exemplars".into(), json!(index.entries.len()));
    Ok((Box::new(KnnDetector { index, provider, k }), settings))
}

fn llm_detector(s: &Settings) -> Result<Built> {
    let endpoint = Settings::require(&s.endpoint, "endpoint")?;
    let model = Settings::require(&s.model, "model")?;
    let mut config = LlmConfig::new(endpoint, model);
    config.retry = retry(s);
    config.mode = prompt_mode(s.mode.unwrap_or(Mode::Fewshot));
    if let Some(t) = s.temperature {
        config.temperature = t;
    }
    if let Some(j) = s.jobs {
        config.concurrency = j;
    }
    let bundle = PromptBundle::for_mode(config.mode, &catalog(&s.catalog)?).map_err(llm_error)?;
    let mut settings = serde_json::Map::new();
    settings.insert("model".into(), json!(model));
    settings.insert("mode".into(), json!(config.mode));
    settings.insert("temperature".into(), json!(config.temperature));
    settings.insert("prompt_hash".into(), json!(bundle.hash));
    let cache = open_cache(&s.cache)?;
    Ok((Box::new(LlmDetector::new(config, bundle, cache).map_err(llm_error)?), settings))
}

pub fn detect(args: DetectArgs, out: &mut dyn Write) -> Result<()> {
    let s = Settings::resolve(args.settings, args.config.as_deref())?;
    let backend = *Settings::require(&s.backend, "backend")?;
    let corpus_path = Settings::existing(&s.corpus, "corpus")?;
    let out_path = Settings::require(&s.out, "out")?.clone();
    distinct(&out_path, &[&corpus_path])?;
    let corpus = load(&corpus_path)?;
    let jobs = s.jobs.unwrap_or(1);

    let (detector, settings): Built = match backend {
        Backend::Rules => (Box::new(RulesDetector::default()), serde_json::Map::new()),
        Backend::Knn => knn_detector(&s)?,
        Backend::Llm => llm_detector(&s)?,
    };
    let created = creation_time();
    let sources: Vec<&str> = corpus.submissions.iter().map(|x| x.source.as_str()).collect();
    let results = detector.classify_batch(&sources, jobs);
    let records: Vec<Record> = corpus
        .submissions
        .iter()
        .zip(results)
        .map(|(sub, r)| Record::new(&sub.id, backend.name(), created, r))
        .collect();
    let detections = Detections {
        header: Header { format: FORMAT.into(), backend: backend.name().into(), seed: s.seed, created, settings },
        records,
    };
    for r in detections.records.iter().filter(|r| r.error.is_some()) {
        log::warn!("{}: {}", r.id, r.error.as_deref().unwrap_or_default());
    }
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    detections.save(&out_path)?;
    let failed = detections.failures();
    say(
        out,
        &format!(
            "{}: {} records written to {} ({failed} failed)\n",
            backend.name(),
            detections.records.len(),
            out_path.display()
        ),
    )?;
    if failed > 0 {
        return Err(CliError::Partial { failed, total: detections.records.len() });
    }
    Ok(())
}

/// Pairs gold labels with predictions for every labeled submission. Failed
/// records count as `UNKNOWN` predictions.
pub fn labeled_pairs(corpus: &Corpus, detections: &Detections) -> Result<Vec<LabeledPair>> {
    pairs_over(corpus, detections, false)
}

/// Like [`labeled_pairs`] but the detections may cover any subset of the
/// corpus, as after obfuscation skips items.
pub fn labeled_pairs_subset(corpus: &Corpus, detections: &Detections) -> Result<Vec<LabeledPair>> {
    pairs_over(corpus, detections, true)
}

fn pairs_over(corpus: &Corpus, detections: &Detections, subset: bool) -> Result<Vec<LabeledPair>> {
    let corpus_ids: BTreeSet<&str> = corpus.submissions.iter().map(|s| s.id.as_str()).collect();
    let mut predicted: HashMap<&str, &Record> = HashMap::new();
    let mut repeated = 0;
    for r in &detections.records {
        if predicted.insert(r.id.as_str(), r).is_some() {
            repeated += 1;
        }
    }
    let det_ids: BTreeSet<&str> = predicted.keys().copied().collect();
    let only_gold = if subset { 0 } else { corpus_ids.difference(&det_ids).count() };
    let only_pred = det_ids.difference(&corpus_ids).count();
    if only_gold + only_pred + repeated > 0 {
        return Err(CliError::IdMismatch(format!(
            "{only_gold} ids only in the corpus, {only_pred} only in the detections, {repeated} repeated"
        )));
    }
    let failed = detections.failures();
    if failed > 0 {
        log::warn!("{failed} failed records scored as UNKNOWN");
    }
    Ok(corpus
        .submissions
        .iter()
        .filter_map(|s| {
            let gold = s.labels.clone()?;
            let record = predicted.get(s.id.as_str())?;
            Some(LabeledPair {
                id: s.id.clone(),
                gold,
                predicted: record.labels.clone().unwrap_or_else(PlanLabelSet::unknown),
                outcome: s.outcome,
            })
        })
        .collect())
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::IdMismatch { .. } => CliError::IdMismatch(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub fn eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load(&args.corpus)?;
    let detections = Detections::load(&args.detections)?;
    let pairs = labeled_pairs(&corpus, &detections)?;
    let report = MetricsReport::compute(&pairs).map_err(eval_error)?;
    let backend = detections.header.backend.as_str();
    let mut text = render_report(backend, &report);
    if let Some(path) = &args.against {
        let obfuscated = Detections::load(path)?;
        let obf_pairs = labeled_pairs_subset(&corpus, &obfuscated)?;
        let kept: BTreeSet<&str> = obf_pairs.iter().map(|p| p.id.as_str()).collect();
        let same: Vec<LabeledPair> = pairs.iter().filter(|p| kept.contains(p.id.as_str())).cloned().collect();
        let base = MetricsReport::compute(&same).map_err(eval_error)?;
        let obf_report = MetricsReport::compute(&obf_pairs).map_err(eval_error)?;
        let delta = ablation_delta(&base, &obf_report).map_err(eval_error)?;
        text.push_str(&format!("\nobfuscated (delta over the same {} submissions)\n", obf_report.n));
        text.push_str(&ablation_table(&[(backend, &obf_report, &delta)]));
    }
    if let Some(dir) = &args.out {
        let rows = [(backend, &report)];
        write_file(&dir.join("metrics.txt"), &text)?;
        write_file(&dir.join("summary.csv"), &summary_csv(&rows))?;
        write_file(&dir.join("per_plan.csv"), &per_plan_csv(&rows))?;
    }
    say(out, &text)
}

pub fn obfuscate(args: ObfuscateArgs, out: &mut dyn Write) -> Result<()> {
    distinct(&args.out, &[&args.corpus])?;
    let corpus = load(&args.corpus)?;
    let result =
        obfuscate_corpus(&corpus.submissions, args.seed, args.strict).map_err(|e| CliError::Strict(e.to_string()))?;
    let mut renames = String::new();
    for (sub, map) in &result.items {
        renames.push_str(&serde_json::to_string(&json!({ "id": sub.id, "map": map })).expect("rename map serializes"));
        renames.push('\n');
    }
    let obfuscated =
        Corpus { submissions: result.items.into_iter().map(|(s, _)| s).collect(), exemplars: corpus.exemplars };
    save_corpus(&args.out, &obfuscated)?;
    let sidecar = renames_path(&args.out);
    write_file(&sidecar, &renames)?;
    for (id, err) in &result.rejected {
        say(out, &format!("skipped {id}: {err}\n"))?;
    }
    say(
        out,
        &format!(
            "{} submissions obfuscated, {} skipped; rename maps in {}\n",
            obfuscated.submissions.len(),
            result.rejected.len(),
            sidecar.display()
        ),
    )
}

/// `dir/name.jsonl` becomes `dir/name.renames.jsonl`.
pub fn renames_path(out: &Path) -> PathBuf {
    out.with_extension("renames.jsonl")
}

pub fn compare(args: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load(&args.corpus)?;
    let a = Detections::load(&args.a)?;
    let b = Detections::load(&args.b)?;
    let pa = labeled_pairs(&corpus, &a)?;
    let pb = labeled_pairs(&corpus, &b)?;
    let fa = per_submission_f1(&pa);
    let fb = per_submission_f1(&pb);
    let method = match args.method {
        None => PMethod::Auto,
        Some(PValue::Exact) => PMethod::Exact,
        Some(PValue::Normal) => PMethod::Normal,
    };
    let (na, nb) = (a.header.backend.as_str(), b.header.backend.as_str());
    let mut text = format!("{na} vs {nb} over {} labeled submissions\n", fa.len());
    match wilcoxon_signed_rank_with(&fa, &fb, args.m, method) {
        Ok(r) => {
            text.push_str(&format!(
                "n = {}\nW+ = {}\nW- = {}\nS = {}\np = {:.6} ({})\nadjusted p = {:.6} (m = {})\n",
                r.n,
                r.w_plus,
                r.w_minus,
                r.statistic,
                r.p_value,
                serde_json::to_value(r.method).expect("method serializes").as_str().unwrap_or_default(),
                r.adjusted_p,
                args.m
            ));
        }
        Err(EvalError::TooFewPairs { n: 0 }) => {
            text.push_str("degenerate: every per-submission F1 is identical; no test performed\n");
        }
        Err(EvalError::TooFewPairs { n }) => {
            text.push_str(&format!("degenerate: only {n} non-zero differences; no test performed\n"));
        }
        Err(e) => return Err(eval_error(e)),
    }
    say(out, &text)
}

pub fn dedup(args: DedupArgs, out: &mut dyn Write) -> Result<()> {
    distinct(&args.out, &[&args.corpus])?;
    let corpus = load(&args.corpus)?;
    let outcome = planlens::ast::dedup(&corpus.submissions);
    let mut text = String::new();
    for d in &outcome.duplicates {
        text.push_str(&format!("{} duplicates {}\n", d.id, d.kept));
    }
    text.push_str(&format!(
        "{} kept, {} duplicates removed, {} unparseable kept\n",
        outcome.kept.len(),
        outcome.duplicates.len(),
        outcome.unparsed.len()
    ));
    save_corpus(&args.out, &Corpus { submissions: outcome.kept, exemplars: corpus.exemplars })?;
    say(out, &text)
}

pub fn sample(args: SampleArgs, out: &mut dyn Write) -> Result<()> {
    distinct(&args.out, &[&args.corpus])?;
    let corpus = load(&args.corpus)?;
    let s = stratified_sample(&corpus.submissions, &Quotas::default(), args.seed);
    let mut text = String::new();
    for f in &s.shortfalls {
        text.push_str(&format!(
            "shortfall {} {}: wanted {}, available {}\n",
            f.problem,
            f.outcome.name(),
            f.wanted,
            f.available
        ));
    }
    text.push_str(&format!(
        "{} selected (seed {}), {} structural duplicates dropped\n",
        s.selected.len(),
        args.seed,
        s.deduplicated.len()
    ));
    save_corpus(&args.out, &Corpus { submissions: s.selected, exemplars: corpus.exemplars })?;
    say(out, &text)
}

pub fn validate(args: ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = load(&args.corpus)?;
    let manifest = serde_json::to_string_pretty(&corpus.manifest()).expect("manifest serializes") + "\n";
    match &args.out {
        Some(path) => write_file(path, &manifest),
        None => say(out, &manifest),
    }
}

pub fn prompt_export(path: &Path, mode: Mode, catalog_path: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    let catalog = catalog(&catalog_path)?;
    let bundle = PromptBundle::for_mode(prompt_mode(mode), &catalog).map_err(llm_error)?;
    let text = serde_json::to_string_pretty(&bundle).expect("bundle serializes") + "\n";
    write_file(path, &text)?;
    say(out, &format!("{}\n", bundle.hash))
}

pub fn finetune_export(
    path: &Path,
    corpus: Option<PathBuf>,
    exemplar_path: Option<PathBuf>,
    catalog_path: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<()> {
    let catalog = catalog(&catalog_path)?;
    let (records, manifest) = match &corpus {
        Some(p) => {
            let subs: Vec<Submission> = load(p)?.submissions;
            export_finetune_from_submissions(&subs, &catalog).map_err(llm_error)?
        }
        None => export_finetune_dataset(&exemplars(&exemplar_path, &catalog)?, &catalog),
    };
    write_file(path, &finetune_jsonl(&records))?;
    let manifest_path = path.with_extension("manifest.json");
    write_file(&manifest_path, &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    say(out, &format!("{} records, manifest in {}\n", records.len(), manifest_path.display()))
}

pub fn index_build(args: DetectArgs, out: &mut dyn Write) -> Result<()> {
    let s = Settings::resolve(args.settings, args.config.as_deref())?;
    let out_path = Settings::require(&s.out, "out")?.clone();
    let ex = exemplars(&s.exemplars, &catalog(&s.catalog)?)?;
    let index = match s.provider.unwrap_or(Provider::Structural) {
        Provider::Structural => {
            let sources: Vec<&str> = ex.iter().map(|e| e.source.as_str()).collect();
            build_index(&ex, &StructuralProvider::fit(&sources))
        }
        Provider::Remote => build_index(&ex, &remote_provider(&s)?),
    }
    .map_err(knn_error)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    index.save(&out_path).map_err(knn_error)?;
    say(
        out,
        &format!("{} exemplars, provider {}, dimension {}\n", index.entries.len(), index.provider, index.dimension),
    )
}
