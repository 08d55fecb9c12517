//! Client for external scoring services ("score protocol v1").
//!
//! Both the external reranker and the external evaluator speak the same
//! protocol: an HTTP `POST` of
//!
//! ```json
//! {"question": "...", "reference": "..." | null, "candidates": ["...", "..."]}
//! ```
//!
//! answered by `{"scores": [number, ...]}`, one score per candidate in
//! request order. Candidates are sent in batches of `batch_size`, with at
//! most `max_in_flight` requests outstanding. Returned scores are clamped
//! to `[0, 1]`.
//!
//! Transport failures and non-2xx statuses are retried (three attempts by
//! default, exponential backoff). A response that parses but does not match
//! the request (wrong length, non-numeric score) fails immediately.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

/// Environment variable whose value is sent as a bearer token.
pub const AUTH_TOKEN_ENV: &str = "RWS_ENDPOINT_TOKEN";

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("batch {batch}: service unavailable after {attempts} attempts: {message}")]
    Retriable {
        batch: usize,
        attempts: u32,
        message: String,
    },
    #[error("batch {batch}: malformed response: {message}")]
    Malformed { batch: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

type BatchResult = Result<Vec<f64>, ProtocolError>;

#[derive(Serialize)]
struct ScoreRequest<'a> {
    question: &'a str,
    reference: Option<&'a str>,
    candidates: &'a [&'a str],
}

#[derive(Debug, Clone)]
pub struct ScoreClient {
    endpoint: String,
    batch_size: usize,
    max_in_flight: usize,
    retry: RetryPolicy,
    auth_token: Option<String>,
    agent: ureq::Agent,
}

impl ScoreClient {
    pub fn new(endpoint: impl Into<String>, batch_size: usize, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            batch_size: batch_size.max(1),
            max_in_flight: max_in_flight.max(1),
            retry: RetryPolicy::default(),
            auth_token: None,
            agent,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_auth_token(mut self, token: Option<String>) -> Self {
        self.auth_token = token.filter(|t| !t.is_empty());
        self
    }

    /// Pick up the bearer token from [`AUTH_TOKEN_ENV`], if set.
    pub fn with_env_auth(self) -> Self {
        let token = std::env::var(AUTH_TOKEN_ENV).ok();
        self.with_auth_token(token)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Number of requests needed for `n` candidates.
    pub fn batch_count(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    /// Score every candidate; output order matches input order.
    pub fn score(
        &self,
        question: &str,
        reference: Option<&str>,
        candidates: &[&str],
    ) -> Result<Vec<f64>, ProtocolError> {
        let batches: Vec<&[&str]> = candidates.chunks(self.batch_size).collect();
        let results: Vec<BatchResult> = if batches.len() <= 1 {
            batches
                .iter()
                .enumerate()
                .map(|(i, b)| self.score_batch(i, question, reference, b))
                .collect()
        } else {
            let slots: Vec<Mutex<Option<BatchResult>>> =
                batches.iter().map(|_| Mutex::new(None)).collect();
            let next = AtomicUsize::new(0);
            let workers = self.max_in_flight.min(batches.len());
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(batch) = batches.get(i) else { break };
                        let r = self.score_batch(i, question, reference, batch);
                        *slots[i].lock().unwrap() = Some(r);
                    });
                }
            });
            slots
                .into_iter()
                .map(|s| s.into_inner().unwrap().expect("every batch is scored"))
                .collect()
        };

        let mut scores = Vec::with_capacity(candidates.len());
        for r in results {
            scores.extend(r?);
        }
        Ok(scores)
    }

    fn score_batch(
        &self,
        batch: usize,
        question: &str,
        reference: Option<&str>,
        candidates: &[&str],
    ) -> Result<Vec<f64>, ProtocolError> {
        let body = serde_json::to_vec(&ScoreRequest {
            question,
            reference,
            candidates,
        })
        .expect("request serializes");

        let attempts = self.retry.attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            match self.post(&body) {
                Ok(text) => return parse_scores(batch, &text, candidates.len()),
                Err(message) => {
                    tracing::warn!(batch, attempt, "score request failed: {message}");
                    last_error = message;
                }
            }
        }
        Err(ProtocolError::Retriable {
            batch,
            attempts,
            message: last_error,
        })
    }

    fn post(&self, body: &[u8]) -> Result<String, String> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json; charset=utf-8");
        if let Some(token) = &self.auth_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        Ok(text)
    }
}

fn parse_scores(batch: usize, text: &str, expected: usize) -> Result<Vec<f64>, ProtocolError> {
    let malformed = |message: String| ProtocolError::Malformed { batch, message };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let scores = value
        .get("scores")
        .and_then(|s| s.as_array())
        .ok_or_else(|| malformed("missing \"scores\" array".into()))?;
    if scores.len() != expected {
        return Err(malformed(format!(
            "expected {expected} scores, got {}",
            scores.len()
        )));
    }
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.as_f64()
                .map(|x| x.clamp(0.0, 1.0))
                .ok_or_else(|| malformed(format!("score {i} is not a number: {s}")))
        })
        .collect()
}
