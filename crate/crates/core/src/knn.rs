//! Nearest-neighbor classification over exemplar embeddings.
//!
//! The built-in [`StructuralProvider`] embeds node-kind path n-grams
//! (n = 1..3) as an L2-normalized TF-IDF vector, so it ignores identifiers
//! and literals entirely. [`RemoteProvider`] delegates to an HTTP embedding
//! service.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::lexer::{tokenize_lenient, TokenKind};
use crate::ast::{node_kind_profile, parse};
use crate::cache::{sha256_hex, ResponseCache};
use crate::corpus::Exemplar;
use crate::http::{HttpError, JsonClient, RetryPolicy};
use crate::taxonomy::{PlanId, PlanLabelSet};

pub const DEFAULT_K: usize = 3;
pub const INDEX_FORMAT: &str = "planlens-index";
pub const INDEX_VERSION: u32 = 1;
pub const STRUCTURAL: &str = "structural";

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("exemplar list is empty")]
    EmptyExemplars,
    #[error("k = {k} is not in 1..={size}")]
    BadK { k: usize, size: usize },
    #[error("embedding failed for `{id}` after {completed} exemplar(s) were embedded: {message}")]
    ProviderFailure { id: String, completed: usize, message: String },
    #[error("vector dimension {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index was built with provider `{index}`, not `{provider}`")]
    ProviderMismatch { index: String, provider: String },
    #[error("malformed index, line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> String;
    /// Fixed vector length, when known before the first call.
    fn dimension(&self) -> Option<usize>;
    fn embed(&self, source: &str) -> Result<Vec<f64>, KnnError>;
    /// Feature statistics to freeze in an index, if the provider has any.
    fn idf_table(&self) -> Option<IdfTable> {
        None
    }
}

/// Vocabulary and inverse document frequencies fit on an exemplar set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub terms: Vec<String>,
    pub weights: Vec<f64>,
}

/// Node-kind n-gram counts, or lexer token-kind n-grams when the source
/// does not parse even after repair.
pub fn structural_features(source: &str) -> BTreeMap<String, u64> {
    let outcome = parse(source);
    let mut features = BTreeMap::new();
    match &outcome.tree {
        Some(tree) => {
            for n in 1..=3 {
                for (k, v) in node_kind_profile(tree, n) {
                    *features.entry(k).or_insert(0) += v;
                }
            }
        }
        None => {
            let kinds: Vec<String> = tokenize_lenient(source)
                .iter()
                .filter_map(|t| match t.kind {
                    TokenKind::Name => Some("token-name".to_string()),
                    TokenKind::Number => Some("token-number".to_string()),
                    TokenKind::String => Some("token-string".to_string()),
                    TokenKind::Keyword => Some(format!("token-{}", t.text)),
                    TokenKind::Op => Some(format!("token-op{}", t.text)),
                    _ => None,
                })
                .collect();
            features.insert("module".to_string(), 1);
            for n in 1..=3 {
                for w in kinds.windows(n) {
                    *features.entry(w.join(">")).or_insert(0) += 1;
                }
            }
        }
    }
    features
}

#[derive(Debug, Clone)]
pub struct StructuralProvider {
    table: IdfTable,
    positions: HashMap<String, usize>,
}

impl StructuralProvider {
    /// Fits smoothed IDF, `ln((1 + N) / (1 + df)) + 1`, over `sources`.
    pub fn fit<S: AsRef<str>>(sources: &[S]) -> StructuralProvider {
        let n = sources.len() as f64;
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for s in sources {
            for term in structural_features(s.as_ref()).into_keys() {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let (terms, weights) = df.into_iter().map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)).unzip();
        StructuralProvider::from_table(IdfTable { terms, weights })
    }

    pub fn from_table(table: IdfTable) -> StructuralProvider {
        let positions = table.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        StructuralProvider { table, positions }
    }
}

impl EmbeddingProvider for StructuralProvider {
    fn name(&self) -> String {
        STRUCTURAL.to_string()
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.table.terms.len())
    }

    /// Terms outside the fitted vocabulary are ignored.
    fn embed(&self, source: &str) -> Result<Vec<f64>, KnnError> {
        let mut v = vec![0.0; self.table.terms.len()];
        for (term, count) in structural_features(source) {
            if let Some(&i) = self.positions.get(&term) {
                v[i] = count as f64 * self.table.weights[i];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }

    fn idf_table(&self) -> Option<IdfTable> {
        Some(self.table.clone())
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL; requests go to `{endpoint}/embeddings`.
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    pub dimension: Option<usize>,
    pub retry: RetryPolicy,
}

impl RemoteConfig {
    pub const TOKEN_VAR: &'static str = "PLANLENS_EMBED_TOKEN";

    pub fn new(endpoint: &str, model: &str) -> RemoteConfig {
        RemoteConfig {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            token: std::env::var(Self::TOKEN_VAR).ok().filter(|t| !t.is_empty()),
            dimension: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Embeddings from a service speaking the common `/embeddings` wire shape,
/// cached by `(provider name, source hash)`.
pub struct RemoteProvider {
    config: RemoteConfig,
    client: JsonClient,
    cache: ResponseCache<Vec<f64>>,
    dimension: OnceLock<usize>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig, cache: ResponseCache<Vec<f64>>) -> RemoteProvider {
        let client = JsonClient::new(config.token.clone(), config.retry.clone());
        let dimension = OnceLock::new();
        if let Some(d) = config.dimension {
            let _ = dimension.set(d);
        }
        RemoteProvider { config, client, cache, dimension }
    }

    /// HTTP requests sent so far.
    pub fn requests(&self) -> usize {
        self.client.requests()
    }

    fn key(&self, source: &str) -> String {
        format!("{}:{}", self.name(), sha256_hex(source.as_bytes()))
    }

    fn check_dimension(&self, got: usize) -> Result<(), KnnError> {
        let expected = *self.dimension.get_or_init(|| got);
        if expected == got {
            Ok(())
        } else {
            Err(KnnError::DimensionMismatch { expected, got })
        }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn dimension(&self) -> Option<usize> {
        self.dimension.get().copied()
    }

    fn embed(&self, source: &str) -> Result<Vec<f64>, KnnError> {
        let key = self.key(source);
        if let Some(v) = self.cache.get(&key) {
            self.check_dimension(v.len())?;
            return Ok(v);
        }
        let url = format!("{}/embeddings", self.config.endpoint);
        let failure = |message: String| KnnError::ProviderFailure { id: String::new(), completed: 0, message };
        let response: EmbeddingResponse = self
            .client
            .post(&url, &EmbeddingRequest { model: &self.config.model, input: source })
            .map_err(|e: HttpError| failure(e.to_string()))?;
        let vector =
            response.data.into_iter().next().ok_or_else(|| failure("response has no embedding".into()))?.embedding;
        self.check_dimension(vector.len())?;
        self.cache.insert(&key, vector.clone())?;
        Ok(vector)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub labels: PlanLabelSet,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    provider: String,
    dimension: usize,
    idf: Option<IdfTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarIndex {
    pub provider: String,
    pub dimension: usize,
    pub idf: Option<IdfTable>,
    pub entries: Vec<IndexEntry>,
}

/// Embeds every exemplar; the first failure aborts the build.
pub fn build_index(exemplars: &[Exemplar], provider: &dyn EmbeddingProvider) -> Result<ExemplarIndex, KnnError> {
    if exemplars.is_empty() {
        return Err(KnnError::EmptyExemplars);
    }
    let mut entries = Vec::with_capacity(exemplars.len());
    for (completed, ex) in exemplars.iter().enumerate() {
        let vector = provider.embed(&ex.source).map_err(|e| match e {
            KnnError::ProviderFailure { message, .. } => {
                KnnError::ProviderFailure { id: ex.id.clone(), completed, message }
            }
            other => other,
        })?;
        if let Some(first) = entries.first().map(|e: &IndexEntry| e.vector.len()) {
            if first != vector.len() {
                return Err(KnnError::DimensionMismatch { expected: first, got: vector.len() });
            }
        }
        entries.push(IndexEntry { id: ex.id.clone(), labels: ex.labels.clone(), vector });
    }
    Ok(ExemplarIndex {
        provider: provider.name(),
        dimension: entries[0].vector.len(),
        idf: provider.idf_table(),
        entries,
    })
}

/// Fits a structural provider on the exemplars and indexes them with it.
pub fn build_structural_index(exemplars: &[Exemplar]) -> Result<ExemplarIndex, KnnError> {
    let sources: Vec<&str> = exemplars.iter().map(|e| e.source.as_str()).collect();
    build_index(exemplars, &StructuralProvider::fit(&sources))
}

impl ExemplarIndex {
    /// The provider that built this index, rebuilt from its stored IDF table.
    pub fn structural_provider(&self) -> Option<StructuralProvider> {
        (self.provider == STRUCTURAL).then(|| self.idf.clone().map(StructuralProvider::from_table)).flatten()
    }

    /// Line-JSON: a header line, then one line per entry.
    pub fn to_jsonl(&self) -> String {
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            provider: self.provider.clone(),
            dimension: self.dimension,
            idf: self.idf.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes") + "\n";
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<ExemplarIndex, KnnError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(KnnError::Format { line: 1, reason: "empty file".into() })?;
        let header: IndexHeader =
            serde_json::from_str(first).map_err(|e| KnnError::Format { line: 1, reason: e.to_string() })?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(KnnError::Format {
                line: 1,
                reason: format!("unsupported format {} v{}", header.format, header.version),
            });
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let entry: IndexEntry =
                serde_json::from_str(line).map_err(|e| KnnError::Format { line: i + 1, reason: e.to_string() })?;
            if entry.vector.len() != header.dimension {
                return Err(KnnError::DimensionMismatch { expected: header.dimension, got: entry.vector.len() });
            }
            entries.push(entry);
        }
        Ok(ExemplarIndex { provider: header.provider, dimension: header.dimension, idf: header.idf, entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), KnnError> {
        Ok(fs::write(path, self.to_jsonl())?)
    }

    pub fn load(path: &Path) -> Result<ExemplarIndex, KnnError> {
        ExemplarIndex::from_jsonl(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
    pub labels: PlanLabelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnPrediction {
    pub labels: PlanLabelSet,
    /// The k nearest exemplars, most similar first.
    pub neighbors: Vec<Neighbor>,
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Similarity at which a neighbor counts as an exact structural copy.
pub const EXACT_MATCH: f64 = 1.0 - 1e-9;

/// A plan is predicted when at least `ceil(k / 2)` neighbors carry it;
/// if none does, the nearest neighbor's labels are used. `UNKNOWN` next to
/// named plans is dropped.
///
/// Exact copies outvote everything else: when the leading neighbors reach
/// [`EXACT_MATCH`], the vote runs over those alone.
pub fn aggregate(neighbors: &[Neighbor]) -> PlanLabelSet {
    let exact = neighbors.iter().take_while(|n| n.similarity >= EXACT_MATCH).count();
    let neighbors = if exact > 0 { &neighbors[..exact] } else { neighbors };
    let threshold = neighbors.len().div_ceil(2);
    let mut votes: BTreeMap<PlanId, usize> = BTreeMap::new();
    for n in neighbors {
        for p in n.labels.iter() {
            *votes.entry(p).or_insert(0) += 1;
        }
    }
    let winners: Vec<PlanId> = votes.into_iter().filter(|(_, v)| *v >= threshold).map(|(p, _)| p).collect();
    if winners.is_empty() {
        return neighbors.first().map_or_else(PlanLabelSet::unknown, |n| n.labels.clone());
    }
    PlanLabelSet::from_detected(winners)
}

pub fn detect_knn(
    index: &ExemplarIndex,
    provider: &dyn EmbeddingProvider,
    source: &str,
    k: usize,
) -> Result<KnnPrediction, KnnError> {
    if provider.name() != index.provider {
        return Err(KnnError::ProviderMismatch { index: index.provider.clone(), provider: provider.name() });
    }
    if k == 0 || k > index.entries.len() {
        return Err(KnnError::BadK { k, size: index.entries.len() });
    }
    let query = provider.embed(source)?;
    if query.len() != index.dimension {
        return Err(KnnError::DimensionMismatch { expected: index.dimension, got: query.len() });
    }
    let mut scored: Vec<Neighbor> = index
        .entries
        .iter()
        .map(|e| Neighbor { id: e.id.clone(), similarity: cosine(&query, &e.vector), labels: e.labels.clone() })
        .collect();
    scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(k);
    Ok(KnnPrediction { labels: aggregate(&scored), neighbors: scored })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neighbor(id: &str, labels: &str) -> Neighbor {
        Neighbor { id: id.into(), similarity: 0.5, labels: labels.parse().unwrap() }
    }

    #[test]
    fn majority_vote() {
        let n = [neighbor("a", "sum"), neighbor("b", "sum"), neighbor("c", "counting")];
        assert_eq!(aggregate(&n), "sum".parse().unwrap());
        let n = [neighbor("a", "sum, counting"), neighbor("b", "linearSearching"), neighbor("c", "evennessCheck")];
        assert_eq!(aggregate(&n), "sum, counting".parse().unwrap());
        let n = [neighbor("a", "UNKNOWN"), neighbor("b", "UNKNOWN"), neighbor("c", "sum")];
        assert_eq!(aggregate(&n), PlanLabelSet::unknown());
        let n = [neighbor("a", "UNKNOWN"), neighbor("b", "sum")];
        assert_eq!(aggregate(&n), "sum".parse().unwrap());
        let n = [neighbor("a", "counting, sum")];
        assert_eq!(aggregate(&n), "counting, sum".parse().unwrap());
    }

    #[test]
    fn exact_copies_decide_alone() {
        let mut n = [neighbor("a", "findBestInCollection"), neighbor("b", "sum"), neighbor("c", "sum")];
        assert_eq!(aggregate(&n), "sum".parse().unwrap());
        n[0].similarity = 1.0;
        assert_eq!(aggregate(&n), "findBestInCollection".parse().unwrap());
        n[1].similarity = 1.0 - 1e-12;
        // Two exact copies: each plan needs one vote, so both count.
        assert_eq!(aggregate(&n), "findBestInCollection, sum".parse().unwrap());
    }

    #[test]
    fn structural_vectors_ignore_names() {
        let p = StructuralProvider::fit(&["a = 1", "for x in y:\n    print(x)\n"]);
        let a = p.embed("a=1").unwrap();
        let b = p.embed("b=1").unwrap();
        assert_eq!(a, b);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        let broken = p.embed("x = (\ny = [\na = 1\nb = 2\n").unwrap();
        assert!((broken.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn idf_weights_are_smoothed() {
        let p = StructuralProvider::fit(&["a = 1", "print(a)"]);
        let table = p.idf_table().unwrap();
        let module = table.terms.iter().position(|t| t == "module").unwrap();
        assert!((table.weights[module] - 1.0).abs() < 1e-12);
        let assignment = table.terms.iter().position(|t| t == "assignment").unwrap();
        assert!((table.weights[assignment] - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn cosine_bounds() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]), -1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }
}
