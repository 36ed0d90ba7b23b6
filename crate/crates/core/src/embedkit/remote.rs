use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingBackendSpec, TextVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each later one.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    model: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct Health {
    pub status: String,
    pub models: Vec<String>,
}

/// Blocking client for the embedding service.
#[derive(Debug)]
pub struct RemoteClient {
    agent: ureq::Agent,
    endpoint: String,
    model_id: String,
    dim: usize,
    max_batch: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

type Slot = Mutex<Option<Result<Vec<TextVector>, EmbedError>>>;

enum Attempt {
    Retry(String),
    Fatal(EmbedError),
}

impl RemoteClient {
    pub fn from_spec(spec: &EmbeddingBackendSpec) -> Result<Self, EmbedError> {
        spec.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(spec.timeout_ms))
            .max_idle_connections_per_host(8)
            .build();
        Ok(RemoteClient {
            agent,
            endpoint: spec
                .endpoint
                .clone()
                .unwrap_or_default()
                .trim_end_matches('/')
                .to_string(),
            model_id: spec.model_id.clone().unwrap_or_default(),
            dim: spec.dim,
            max_batch: spec.max_batch,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        })
    }

    pub fn health(&self) -> Result<Health, EmbedError> {
        let url = format!("{}/v1/health", self.endpoint);
        match self.agent.get(&url).call() {
            Ok(resp) => resp
                .into_json::<Health>()
                .map_err(|e| EmbedError::ProtocolError(format!("health body: {e}"))),
            Err(ureq::Error::Status(status, resp)) => Err(EmbedError::ServiceError {
                status,
                message: error_message(resp),
            }),
            Err(e) => Err(EmbedError::ServiceUnavailable {
                attempts: 1,
                last_error: e.to_string(),
            }),
        }
    }

    /// Splits `texts` into `max_batch` chunks, keeps up to `max_in_flight`
    /// requests open at once and reassembles vectors in input order. Any
    /// failed chunk fails the whole call.
    pub fn embed_batch<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
    ) -> Result<Vec<TextVector>, EmbedError> {
        let texts: Vec<&str> = texts.iter().map(AsRef::as_ref).collect();
        let chunks: Vec<&[&str]> = texts.chunks(self.max_batch).collect();
        if chunks.is_empty() {
            return Ok(Vec::new());
        }
        let results: Vec<Slot> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.max(1).min(chunks.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let r = self.post_with_retry(chunks[i]);
                    let failed = r.is_err();
                    *results[i].lock().unwrap() = Some(r);
                    if failed {
                        // Stop handing out work; the call fails anyway.
                        next.store(chunks.len(), Ordering::Relaxed);
                        break;
                    }
                });
            }
        });

        // Chunks are only skipped after another one failed, so a skipped
        // slot always comes with an error elsewhere.
        let mut out = Vec::with_capacity(texts.len());
        for slot in results {
            match slot.into_inner().unwrap() {
                Some(Ok(vs)) => out.extend(vs),
                Some(Err(e)) => return Err(e),
                None => {}
            }
        }
        Ok(out)
    }

    fn post_with_retry(&self, texts: &[&str]) -> Result<Vec<TextVector>, EmbedError> {
        let mut last_error = String::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.post_once(texts) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("embed request attempt {} failed: {msg}", attempt + 1);
                    last_error = msg;
                }
            }
        }
        Err(EmbedError::ServiceUnavailable {
            attempts: self.retry.max_attempts,
            last_error,
        })
    }

    fn post_once(&self, texts: &[&str]) -> Result<Vec<TextVector>, Attempt> {
        let url = format!("{}/v1/embed", self.endpoint);
        let body = EmbedRequest {
            model: &self.model_id,
            texts,
        };
        let resp = match self.agent.post(&url).send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, resp)) => {
                let message = error_message(resp);
                return if status >= 500 || status == 429 {
                    Err(Attempt::Retry(format!("HTTP {status}: {message}")))
                } else {
                    Err(Attempt::Fatal(EmbedError::ServiceError { status, message }))
                };
            }
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let raw = resp
            .into_string()
            .map_err(|e| Attempt::Retry(format!("reading response: {e}")))?;
        let parsed: EmbedResponse = serde_json::from_str(&raw)
            .map_err(|e| Attempt::Fatal(EmbedError::ProtocolError(format!("embed body: {e}"))))?;
        self.check(texts.len(), parsed).map_err(Attempt::Fatal)
    }

    fn check(&self, expected: usize, resp: EmbedResponse) -> Result<Vec<TextVector>, EmbedError> {
        if resp.model != self.model_id {
            return Err(EmbedError::ProtocolError(format!(
                "asked for model `{}`, got `{}`",
                self.model_id, resp.model
            )));
        }
        if resp.dim != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                found: resp.dim,
            });
        }
        if resp.vectors.len() != expected {
            return Err(EmbedError::ProtocolError(format!(
                "sent {expected} texts, received {} vectors",
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|values| {
                if values.len() != self.dim {
                    Err(EmbedError::DimMismatch {
                        expected: self.dim,
                        found: values.len(),
                    })
                } else if values.iter().any(|x| !x.is_finite()) {
                    Err(EmbedError::ProtocolError("non-finite vector entry".into()))
                } else {
                    Ok(TextVector { values })
                }
            })
            .collect()
    }
}

fn error_message(resp: ureq::Response) -> String {
    let raw = resp.into_string().unwrap_or_default();
    serde_json::from_str::<ErrorBody>(&raw)
        .map(|b| b.error)
        .unwrap_or(raw)
}
