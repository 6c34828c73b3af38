//! Chat-completion backend: few-shot prompt construction, completion
//! parsing, caching and fine-tune dataset export.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{sha256_hex, ResponseCache};
use crate::catalog::Catalog;
use crate::corpus::{Exemplar, Submission};
use crate::http::{HttpError, JsonClient, RetryPolicy};
use crate::taxonomy::{PlanId, PlanLabelSet};

pub const TOKEN_VAR: &str = "PLANLENS_LLM_TOKEN";
pub const DEFAULT_CONCURRENCY: usize = 4;

const FRAMING: &str = "You classify short Python programs written by students in an introductory \
programming course. A programming plan is a recurring code pattern that achieves a recognizable \
goal. Label each program with every plan it contains.";

const UNKNOWN_INSTRUCTION: &str = "If no known plan could apply to the program, answer UNKNOWN. \
Never combine UNKNOWN with other labels.";

const FORMAT_INSTRUCTION: &str = "Answer with the exact label names listed above, separated by \
commas, and nothing else.";

const REMINDER: &str = "Your answer could not be read. Reply only with label names from the list, \
separated by commas, and nothing else.";

#[derive(Debug, Clone, Error)]
pub enum LlmError {
    #[error("catalog is incomplete for: {}", .0.iter().map(|p| p.name()).collect::<Vec<_>>().join(", "))]
    IncompleteCatalog(Vec<PlanId>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Transport(#[from] HttpError),
    #[error("completion is not a label list: {raw:?}")]
    LabelParseFailure { raw: String },
    #[error("`{0}` has no gold labels")]
    MissingLabels(String),
    #[error("cache: {0}")]
    Io(String),
}

impl From<std::io::Error> for LlmError {
    fn from(e: std::io::Error) -> Self {
        LlmError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Fewshot,
    /// Short prompt without exemplars, for fine-tuned models.
    Finetuned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExemplarBlock {
    pub id: String,
    pub source: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanBlock {
    pub plan: PlanId,
    pub goal: String,
    pub exemplars: Vec<ExemplarBlock>,
}

/// Everything sent to the model except the submission itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub mode: PromptMode,
    /// Task framing and the ten label definitions.
    pub system: String,
    pub blocks: Vec<PlanBlock>,
    pub unknown_instruction: String,
    pub format_instruction: String,
    /// SHA-256 of [`PromptBundle::text`].
    pub hash: String,
}

impl PromptBundle {
    /// The full few-shot prompt: definitions plus three exemplars per plan.
    pub fn fewshot(catalog: &Catalog) -> Result<PromptBundle, LlmError> {
        let incomplete = catalog.incomplete_plans();
        if !incomplete.is_empty() {
            return Err(LlmError::IncompleteCatalog(incomplete));
        }
        let blocks = catalog
            .entries()
            .iter()
            .filter(|e| e.id != PlanId::Unknown)
            .map(|e| PlanBlock {
                plan: e.id,
                goal: e.goal_text.clone(),
                exemplars: e
                    .exemplar_snippets
                    .iter()
                    .map(|s| ExemplarBlock { id: s.id.clone(), source: s.source.clone(), answer: s.labels.render() })
                    .collect(),
            })
            .collect();
        Ok(PromptBundle::assemble(PromptMode::Fewshot, catalog, blocks))
    }

    /// The short prompt: definitions and instructions only.
    pub fn short(catalog: &Catalog) -> PromptBundle {
        PromptBundle::assemble(PromptMode::Finetuned, catalog, Vec::new())
    }

    pub fn for_mode(mode: PromptMode, catalog: &Catalog) -> Result<PromptBundle, LlmError> {
        match mode {
            PromptMode::Fewshot => PromptBundle::fewshot(catalog),
            PromptMode::Finetuned => Ok(PromptBundle::short(catalog)),
        }
    }

    fn assemble(mode: PromptMode, catalog: &Catalog, blocks: Vec<PlanBlock>) -> PromptBundle {
        let mut system = format!("{FRAMING}\n\nLabels:\n");
        for e in catalog.entries() {
            system.push_str(&format!("- {}: {}\n", e.id.name(), e.goal_text));
        }
        let mut bundle = PromptBundle {
            mode,
            system,
            blocks,
            unknown_instruction: UNKNOWN_INSTRUCTION.into(),
            format_instruction: FORMAT_INSTRUCTION.into(),
            hash: String::new(),
        };
        bundle.hash = sha256_hex(bundle.text().as_bytes());
        bundle
    }

    pub fn exemplar_count(&self) -> usize {
        self.blocks.iter().map(|b| b.exemplars.len()).sum()
    }

    /// The system message.
    pub fn text(&self) -> String {
        let mut out = self.system.clone();
        out.push('\n');
        out.push_str(&self.unknown_instruction);
        out.push('\n');
        out.push_str(&self.format_instruction);
        out.push('\n');
        if !self.blocks.is_empty() {
            out.push_str("\nExamples, grouped by plan:\n");
        }
        for b in &self.blocks {
            out.push_str(&format!("\n## Plan {}\nGoal: {}\n", b.plan.name(), b.goal));
            for ex in &b.exemplars {
                out.push_str(&format!(
                    "\n### Example {}\n```python\n{}\n```\nAnswer: {}\n",
                    ex.id,
                    ex.source.trim_end(),
                    ex.answer
                ));
            }
        }
        out
    }

    pub fn messages(&self, source: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::new("system", self.text()), ChatMessage::new("user", user_message(source))]
    }
}

fn user_message(source: &str) -> String {
    format!("Program:\n```python\n{}\n```\nLabels:", source.trim_end())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: role.into(), content: content.into() }
    }
}

/// Parses a completion into labels. A trailing period and surrounding
/// backticks are tolerated; every other token must be a label name.
/// `UNKNOWN` next to named plans is dropped with a warning.
pub fn parse_completion(raw: &str) -> Result<PlanLabelSet, LlmError> {
    let failure = || LlmError::LabelParseFailure { raw: raw.to_string() };
    let text = raw.trim_matches(|c: char| c == '`' || c == '.' || c.is_whitespace());
    let mut plans = Vec::new();
    for token in text.split([',', '\n']).map(str::trim).filter(|t| !t.is_empty()) {
        plans.push(token.parse::<PlanId>().map_err(|_| failure())?);
    }
    if plans.is_empty() {
        return Err(failure());
    }
    let set = PlanLabelSet::from_detected(plans.iter().copied());
    if plans.contains(&PlanId::Unknown) && !set.is_unknown() {
        log::warn!("completion {raw:?} combines UNKNOWN with plans; keeping the plans");
    }
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct LlmConfig {
    /// Base URL; requests go to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub token: Option<String>,
    pub retry: RetryPolicy,
    pub mode: PromptMode,
    pub concurrency: usize,
    /// Minimum spacing between requests across all workers.
    pub min_interval: Option<Duration>,
}

impl LlmConfig {
    pub fn new(endpoint: &str, model: &str) -> LlmConfig {
        LlmConfig {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            temperature: 0.0,
            max_tokens: 64,
            token: std::env::var(TOKEN_VAR).ok().filter(|t| !t.is_empty()),
            retry: RetryPolicy::default(),
            mode: PromptMode::Fewshot,
            concurrency: DEFAULT_CONCURRENCY,
            min_interval: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig(format!(
                "temperature {} is not a non-negative number",
                self.temperature
            )));
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(LlmError::InvalidConfig("endpoint and model are required".into()));
        }
        if self.concurrency == 0 {
            return Err(LlmError::InvalidConfig("concurrency must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmOutput {
    pub labels: PlanLabelSet,
    pub completion: String,
    pub cached: bool,
}

pub struct LlmDetector {
    config: LlmConfig,
    bundle: PromptBundle,
    client: JsonClient,
    cache: ResponseCache<String>,
    next_slot: Mutex<Instant>,
}

impl LlmDetector {
    pub fn new(config: LlmConfig, bundle: PromptBundle, cache: ResponseCache<String>) -> Result<LlmDetector, LlmError> {
        config.validate()?;
        if bundle.mode != config.mode {
            return Err(LlmError::InvalidConfig("prompt bundle does not match the configured mode".into()));
        }
        let client = JsonClient::new(config.token.clone(), config.retry.clone());
        Ok(LlmDetector { config, bundle, client, cache, next_slot: Mutex::new(Instant::now()) })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn bundle(&self) -> &PromptBundle {
        &self.bundle
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests(&self) -> usize {
        self.client.requests()
    }

    pub fn cache_key(&self, source: &str) -> String {
        sha256_hex(
            format!(
                "{}\n{}\n{}\n{}",
                self.config.model,
                self.bundle.hash,
                sha256_hex(source.as_bytes()),
                self.config.temperature
            )
            .as_bytes(),
        )
    }

    fn throttle(&self) {
        let Some(gap) = self.config.min_interval else { return };
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + gap;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self.throttle();
        let url = format!("{}/chat/completions", self.config.endpoint);
        let request = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let response: ChatResponse = self.client.post(&url, &request)?;
        response
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| HttpError::Decode("response has no choices".into()).into())
    }

    /// Classifies one program, reprompting once on an unreadable answer.
    pub fn detect(&self, source: &str) -> Result<LlmOutput, LlmError> {
        let key = self.cache_key(source);
        if let Some(completion) = self.cache.get(&key) {
            let labels = parse_completion(&completion)?;
            return Ok(LlmOutput { labels, completion, cached: true });
        }
        let mut messages = self.bundle.messages(source);
        let first = self.complete(&messages)?;
        let (completion, labels) = match parse_completion(&first) {
            Ok(labels) => (first, labels),
            Err(_) => {
                log::info!("reprompting after unreadable completion {first:?}");
                messages.push(ChatMessage::new("assistant", first));
                messages.push(ChatMessage::new("user", REMINDER));
                let second = self.complete(&messages)?;
                let labels = parse_completion(&second)?;
                (second, labels)
            }
        };
        self.cache.insert(&key, completion.clone())?;
        Ok(LlmOutput { labels, completion, cached: false })
    }

    /// Classifies many programs with at most `config.concurrency` requests
    /// in flight. Identical sources are sent once; results keep input order.
    pub fn detect_batch(&self, sources: &[&str]) -> Vec<Result<LlmOutput, LlmError>> {
        let mut unique: Vec<&str> = Vec::new();
        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        let positions: Vec<usize> = sources
            .iter()
            .map(|s| {
                *slot_of.entry(s).or_insert_with(|| {
                    unique.push(s);
                    unique.len() - 1
                })
            })
            .collect();

        let results: Vec<Mutex<Option<Result<LlmOutput, LlmError>>>> =
            unique.iter().map(|_| Mutex::new(None)).collect();
        let cursor = AtomicUsize::new(0);
        let workers = self.config.concurrency.min(unique.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::SeqCst);
                    if i >= unique.len() {
                        break;
                    }
                    let outcome = self.detect(unique[i]);
                    *results[i].lock().expect("result lock") = Some(outcome);
                });
            }
        });

        let done: Vec<Result<LlmOutput, LlmError>> =
            results.into_iter().map(|m| m.into_inner().expect("result lock").expect("every slot is filled")).collect();
        let mut seen = vec![false; unique.len()];
        positions
            .into_iter()
            .map(|slot| {
                let mut out = done[slot].clone();
                if let Ok(out) = out.as_mut() {
                    // Later duplicates are answered from the first request.
                    out.cached |= seen[slot];
                }
                seen[slot] = true;
                out
            })
            .collect()
    }
}

/// One training example in the common chat fine-tune schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub messages: Vec<ChatMessage>,
}

impl FinetuneRecord {
    pub fn target(&self) -> Option<&str> {
        self.messages.last().filter(|m| m.role == "assistant").map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneManifest {
    pub records: usize,
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: String,
    pub prompt_hash: String,
    pub catalog_version: u32,
}

fn finetune_record(bundle: &PromptBundle, source: &str, labels: &PlanLabelSet) -> FinetuneRecord {
    let mut messages = bundle.messages(source);
    messages.push(ChatMessage::new("assistant", labels.render()));
    FinetuneRecord { messages }
}

fn manifest(records: usize, bundle: &PromptBundle, catalog: &Catalog) -> FinetuneManifest {
    FinetuneManifest {
        records,
        epochs: 3,
        batch_size: 2,
        learning_rate: "provider default / same as pretraining".into(),
        prompt_hash: bundle.hash.clone(),
        catalog_version: catalog.version,
    }
}

/// One record per exemplar, built on the short prompt.
pub fn export_finetune_dataset(exemplars: &[Exemplar], catalog: &Catalog) -> (Vec<FinetuneRecord>, FinetuneManifest) {
    let bundle = PromptBundle::short(catalog);
    let records: Vec<FinetuneRecord> =
        exemplars.iter().map(|e| finetune_record(&bundle, &e.source, &e.labels)).collect();
    let manifest = manifest(records.len(), &bundle, catalog);
    (records, manifest)
}

/// Like [`export_finetune_dataset`] for labeled submissions.
pub fn export_finetune_from_submissions(
    submissions: &[Submission],
    catalog: &Catalog,
) -> Result<(Vec<FinetuneRecord>, FinetuneManifest), LlmError> {
    let bundle = PromptBundle::short(catalog);
    let records = submissions
        .iter()
        .map(|s| {
            let labels = s.labels.as_ref().ok_or_else(|| LlmError::MissingLabels(s.id.clone()))?;
            Ok(finetune_record(&bundle, &s.source, labels))
        })
        .collect::<Result<Vec<_>, LlmError>>()?;
    let manifest = manifest(records.len(), &bundle, catalog);
    Ok((records, manifest))
}

pub fn finetune_jsonl(records: &[FinetuneRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fewshot_bundle_shape() {
        let catalog = Catalog::builtin();
        let bundle = PromptBundle::fewshot(&catalog).unwrap();
        assert_eq!(bundle.blocks.len(), 9);
        assert_eq!(bundle.exemplar_count(), 27);
        let text = bundle.text();
        assert_eq!(text.matches("### Example ").count(), 27);
        let definitions = &bundle.system;
        for plan in PlanId::ALL {
            assert_eq!(definitions.matches(&format!("- {}: ", plan.name())).count(), 1, "{plan}");
        }
        assert!(text.contains("no known plan could apply"));
        assert_eq!(bundle.hash, PromptBundle::fewshot(&Catalog::builtin()).unwrap().hash);
        assert_eq!(bundle.hash.len(), 64);
    }

    #[test]
    fn hash_tracks_every_byte() {
        let mut catalog = Catalog::builtin();
        let before = PromptBundle::fewshot(&catalog).unwrap().hash;
        catalog.entry_mut(PlanId::Sum).goal_text.push('.');
        assert_ne!(PromptBundle::fewshot(&catalog).unwrap().hash, before);
    }

    #[test]
    fn incomplete_catalog_is_rejected() {
        let mut catalog = Catalog::builtin();
        catalog.entry_mut(PlanId::Counting).exemplar_snippets.pop();
        assert!(matches!(
            PromptBundle::fewshot(&catalog),
            Err(LlmError::IncompleteCatalog(p)) if p == vec![PlanId::Counting]
        ));
        assert_eq!(PromptBundle::short(&catalog).exemplar_count(), 0);
    }

    #[test]
    fn completion_parsing() {
        let set = |s: &str| s.parse::<PlanLabelSet>().unwrap();
        assert_eq!(parse_completion("sum, processAllItems").unwrap(), set("sum, processAllItems"));
        assert_eq!(parse_completion("UNKNOWN").unwrap(), PlanLabelSet::unknown());
        assert_eq!(parse_completion(" `sum`.\n").unwrap(), set("sum"));
        assert_eq!(parse_completion("UNKNOWN, counting").unwrap(), set("counting"));
        for bad in ["", "The answer is sum", "sum, averaging"] {
            assert!(matches!(parse_completion(bad), Err(LlmError::LabelParseFailure { .. })), "{bad:?}");
        }
    }

    #[test]
    fn finetune_export() {
        let catalog = Catalog::builtin();
        let exemplars = Exemplar::from_catalog(&catalog);
        let (records, manifest) = export_finetune_dataset(&exemplars, &catalog);
        assert_eq!(records.len(), 27);
        assert_eq!((manifest.epochs, manifest.batch_size), (3, 2));
        assert_eq!(manifest.learning_rate, "provider default / same as pretraining");
        let jsonl = finetune_jsonl(&records);
        let back: Vec<FinetuneRecord> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, records);
        assert_eq!(back[0].target(), Some(exemplars[0].labels.render().as_str()));
        assert!(!back[0].messages[0].content.contains("### Example"));
    }

    #[test]
    fn negative_temperature_is_invalid() {
        let mut config = LlmConfig::new("http://localhost:1", "m");
        config.temperature = -0.1;
        assert!(matches!(config.validate(), Err(LlmError::InvalidConfig(_))));
    }
}
