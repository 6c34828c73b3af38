//! Run configuration: command-line flags over a TOML file over the
//! environment.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Rules,
    Knn,
    Llm,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Rules => "rules",
            Backend::Knn => "knn",
            Backend::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Structural,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fewshot,
    Finetuned,
}

/// Every setting a run can take; unset fields fall through to the next
/// layer.
#[derive(Debug, Clone, Default, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Detector backend.
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Submission corpus (line-JSON).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Exemplar file (line-JSON); defaults to the bundled catalog snippets.
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Plan catalog file; defaults to the bundled catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Prebuilt kNN index.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Neighbors consulted by the kNN backend.
    #[arg(long)]
    pub k: Option<usize>,
    /// Embedding provider for the kNN backend.
    #[arg(long, value_enum)]
    pub provider: Option<Provider>,
    /// Base URL of the embedding or chat-completion service.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the service.
    #[arg(long)]
    pub model: Option<String>,
    /// Prompt variant for the LLM backend.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Response cache file (line-JSON), created if missing.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Sampling temperature for the LLM backend.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Attempts per request, including the first.
    #[arg(long)]
    pub attempts: Option<u32>,
    /// Initial retry backoff in milliseconds.
    #[arg(long)]
    pub backoff_ms: Option<u64>,
}

macro_rules! layer {
    ($self:ident, $other:ident, $($field:ident),*) => {
        Settings { $($field: $self.$field.or($other.$field)),* }
    };
}

impl Settings {
    /// Fills unset fields from `other`.
    pub fn or(self, other: Settings) -> Settings {
        layer!(
            self,
            other,
            backend,
            corpus,
            exemplars,
            catalog,
            index,
            out,
            seed,
            jobs,
            k,
            provider,
            endpoint,
            model,
            mode,
            cache,
            temperature,
            timeout,
            attempts,
            backoff_ms
        )
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `PLANLENS_BACKEND`, `PLANLENS_ENDPOINT` and `PLANLENS_MODEL`.
    pub fn from_env() -> Result<Settings, CliError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let backend = match var("PLANLENS_BACKEND") {
            Some(b) => Some(
                <Backend as clap::ValueEnum>::from_str(&b, true)
                    .map_err(|_| CliError::Config(format!("PLANLENS_BACKEND: unknown backend `{b}`")))?,
            ),
            None => None,
        };
        Ok(Settings {
            backend,
            endpoint: var("PLANLENS_ENDPOINT"),
            model: var("PLANLENS_MODEL"),
            ..Settings::default()
        })
    }

    /// Flags, then the optional config file, then the environment.
    pub fn resolve(flags: Settings, config: Option<&Path>) -> Result<Settings, CliError> {
        let file = match config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        Ok(flags.or(file).or(Settings::from_env()?))
    }

    pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| CliError::Config(format!("missing --{flag}")))
    }

    pub fn existing(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
        let p = Settings::require(path, flag)?;
        if !p.exists() {
            return Err(CliError::Config(format!("--{flag} {} does not exist", p.display())));
        }
        Ok(p.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let flags = Settings { k: Some(5), ..Settings::default() };
        let file: Settings = toml::from_str("k = 3\nbackend = \"knn\"\nmodel = \"m\"\n").unwrap();
        let merged = flags.or(file);
        assert_eq!(merged.k, Some(5));
        assert_eq!(merged.backend, Some(Backend::Knn));
        assert_eq!(merged.model.as_deref(), Some("m"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("colour = 1").is_err());
    }
}
