use std::sync::{Condvar, Mutex};
use std::time::Duration;

use clozebias_core::lm::{LogprobProvider, SentenceScore};
use clozebias_core::ProviderError;

use super::record::{parse_http_response, LogprobRequest};

/// Environment variable holding the endpoint URL.
pub const ENV_URL: &str = "CLOZEBIAS_LM_URL";

const ENDPOINT: &str = "/v1/logprobs";

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub model_id: String,
    /// Concurrent requests allowed in flight.
    pub max_in_flight: usize,
    /// Attempts per request, including the first.
    pub attempts: u32,
    pub batch_size: usize,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            model_id: "default".to_string(),
            max_in_flight: 4,
            attempts: 3,
            batch_size: 16,
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(200),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Client for the `POST /v1/logprobs` protocol.
pub struct HttpProvider {
    url: String,
    options: HttpOptions,
    agent: ureq::Agent,
    limiter: Limiter,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl HttpProvider {
    /// `base` may be the server root or the full endpoint URL.
    pub fn new(base: &str, options: HttpOptions) -> Self {
        let trimmed = base.trim_end_matches('/');
        let url = if trimmed.ends_with(ENDPOINT) {
            trimmed.to_string()
        } else {
            format!("{trimmed}{ENDPOINT}")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(options.timeout))
            .build()
            .into();
        let limiter = Limiter::new(options.max_in_flight);
        Self {
            url,
            options,
            agent,
            limiter,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn post_once(&self, body: &LogprobRequest) -> Result<Vec<SentenceScore>, Failure> {
        let _permit = self.limiter.acquire();
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(body)
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        parse_http_response(status, &text).map_err(|msg| {
            if status >= 500 {
                Failure::Retryable(msg)
            } else {
                Failure::Fatal(msg)
            }
        })
    }

    fn post(&self, texts: &[&str]) -> Result<Vec<SentenceScore>, ProviderError> {
        let body = LogprobRequest {
            model_id: self.options.model_id.clone(),
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let attempts = self.options.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.post_once(&body) {
                Ok(scores) => return self.check(texts, scores),
                Err(Failure::Fatal(msg)) => {
                    return Err(ProviderError::Transport {
                        url: self.url.clone(),
                        attempts: attempt,
                        message: msg,
                    })
                }
                Err(Failure::Retryable(msg)) => {
                    log::debug!("{} attempt {attempt}/{attempts} failed: {msg}", self.url);
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(self.options.backoff * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(ProviderError::Transport {
            url: self.url.clone(),
            attempts,
            message: last,
        })
    }

    fn check(&self, texts: &[&str], scores: Vec<SentenceScore>) -> Result<Vec<SentenceScore>, ProviderError> {
        if scores.len() != texts.len() {
            return Err(ProviderError::Transport {
                url: self.url.clone(),
                attempts: 1,
                message: format!("asked for {} records, got {}", texts.len(), scores.len()),
            });
        }
        for (text, score) in texts.iter().zip(&scores) {
            if score.text != *text {
                return Err(ProviderError::InvalidRecord {
                    sentence: text.to_string(),
                    message: format!("response record is for {:?}", score.text),
                });
            }
        }
        Ok(scores)
    }
}

impl LogprobProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.options.model_id
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ProviderError> {
        let mut scores = self.post(&[text])?;
        Ok(scores.remove(0))
    }

    fn score_many(&self, texts: &[&str]) -> Vec<Result<SentenceScore, ProviderError>> {
        use rayon::prelude::*;
        texts
            .par_chunks(self.options.batch_size.max(1))
            .map(|chunk| match self.post(chunk) {
                Ok(scores) => scores.into_iter().map(Ok).collect::<Vec<_>>(),
                Err(e) => chunk.iter().map(|_| Err(e.clone())).collect(),
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }
}
