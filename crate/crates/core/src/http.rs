//! JSON-over-HTTP client with retries, shared by the remote backends.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HttpError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubled for each later one.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff: Duration::from_millis(500), timeout: Duration::from_secs(60) }
    }
}

pub struct JsonClient {
    agent: ureq::Agent,
    token: Option<String>,
    policy: RetryPolicy,
    requests: AtomicUsize,
}

impl JsonClient {
    pub fn new(token: Option<String>, policy: RetryPolicy) -> JsonClient {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient { agent, token, policy, requests: AtomicUsize::new(0) }
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// POSTs `body` and decodes the JSON answer. Transport errors, 429 and
    /// 5xx answers are retried with exponential backoff; other statuses
    /// fail at once.
    pub fn post<B: Serialize, T: DeserializeOwned>(&self, url: &str, body: &B) -> Result<T, HttpError> {
        let attempts = self.policy.max_attempts.max(1);
        let mut delay = self.policy.backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                log::warn!("retrying {url} in {delay:?} (attempt {attempt}/{attempts}): {last}");
                std::thread::sleep(delay);
                delay *= 2;
            }
            self.requests.fetch_add(1, Ordering::SeqCst);
            let mut request = self.agent.post(url);
            if let Some(token) = &self.token {
                request = request.header("Authorization", &format!("Bearer {token}"));
            }
            let mut response = match request.send_json(body) {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = response.status().as_u16();
            if status == 429 || status >= 500 {
                last = format!("status {status}");
                continue;
            }
            if status >= 400 {
                let body = response.body_mut().read_to_string().unwrap_or_default();
                return Err(HttpError::Status { status, body });
            }
            return response.body_mut().read_json::<T>().map_err(|e| HttpError::Decode(e.to_string()));
        }
        Err(HttpError::Transport { attempts, message: last })
    }
}
