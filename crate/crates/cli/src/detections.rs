//! Detection files: a header line followed by one record per submission,
//! in corpus order.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use planlens::detector::{Classification, DetectError};
use planlens::taxonomy::PlanLabelSet;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FORMAT: &str = "planlens-detections";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub backend: String,
    pub seed: Option<u64>,
    /// Unix seconds; `SOURCE_DATE_EPOCH` when set.
    pub created: u64,
    /// Backend settings worth keeping next to the results (k, provider,
    /// model, prompt hash).
    #[serde(default)]
    pub settings: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub backend: String,
    pub timestamp: u64,
    /// Absent when the item failed.
    pub labels: Option<PlanLabelSet>,
    /// Rule evidence, neighbors or the raw completion.
    #[serde(default)]
    pub details: serde_json::Value,
    #[serde(default)]
    pub error: Option<String>,
}

impl Record {
    pub fn new(id: &str, backend: &str, timestamp: u64, result: Result<Classification, DetectError>) -> Record {
        match result {
            Ok(c) => Record {
                id: id.to_string(),
                backend: backend.to_string(),
                timestamp,
                labels: Some(c.labels),
                details: serde_json::to_value(&c.details).expect("details serialize"),
                error: None,
            },
            Err(e) => Record {
                id: id.to_string(),
                backend: backend.to_string(),
                timestamp,
                labels: None,
                details: serde_json::Value::Null,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detections {
    pub header: Header,
    pub records: Vec<Record>,
}

impl Detections {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.labels.is_none()).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes") + "\n";
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Detections, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or("empty detection file")?;
        let header: Header = serde_json::from_str(first).map_err(|e| format!("line 1: {e}"))?;
        if header.format != FORMAT {
            return Err(format!("line 1: not a detection file (format `{}`)", header.format));
        }
        let records = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<Vec<Record>, String>>()?;
        Ok(Detections { header, records })
    }

    pub fn load(path: &Path) -> Result<Detections, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Detections::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| CliError::io(path, e))
    }
}

/// `SOURCE_DATE_EPOCH` if set and numeric, else the wall clock.
pub fn creation_time() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let det = Detections {
            header: Header {
                format: FORMAT.into(),
                backend: "rules".into(),
                seed: Some(3),
                created: 10,
                settings: Default::default(),
            },
            records: vec![
                Record {
                    id: "a".into(),
                    backend: "rules".into(),
                    timestamp: 10,
                    labels: Some("sum".parse().unwrap()),
                    details: serde_json::json!({ "evidence": [] }),
                    error: None,
                },
                Record {
                    id: "b".into(),
                    backend: "rules".into(),
                    timestamp: 10,
                    labels: None,
                    details: serde_json::Value::Null,
                    error: Some("boom".into()),
                },
            ],
        };
        let text = det.to_jsonl();
        assert_eq!(Detections::parse(&text).unwrap(), det);
        assert_eq!(det.failures(), 1);
        assert!(Detections::parse("{\"format\":\"x\",\"backend\":\"r\",\"seed\":null,\"created\":0}").is_err());
    }
}
