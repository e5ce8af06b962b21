//! Blocking JSON POST with bounded retries, shared by the encoder and LLM clients.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
            timeout_ms: 120_000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

enum Failure {
    Retriable(Error),
    Fatal(Error),
}

fn is_retriable_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

pub(crate) struct JsonPoster {
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
}

impl JsonPoster {
    pub(crate) fn new(policy: RetryPolicy) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .build()
            .map_err(|e| Error::Network {
                url: String::new(),
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(JsonPoster { client, policy })
    }

    fn attempt(&self, url: &str, body: &Value, attempts: u32) -> std::result::Result<Value, Failure> {
        let resp = self.client.post(url).json(body).send().map_err(|e| {
            if e.is_timeout() {
                Failure::Retriable(Error::Timeout {
                    url: url.to_owned(),
                    attempts,
                })
            } else {
                Failure::Retriable(Error::Network {
                    url: url.to_owned(),
                    attempts,
                    message: e.to_string(),
                })
            }
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            let err = Error::HttpStatus {
                url: url.to_owned(),
                status,
                attempts,
            };
            return Err(if is_retriable_status(status) {
                Failure::Retriable(err)
            } else {
                Failure::Fatal(err)
            });
        }
        resp.json::<Value>()
            .map_err(|e| Failure::Fatal(Error::Protocol(format!("{url}: {e}"))))
    }

    /// POSTs `body` and returns the decoded JSON response.
    pub(crate) fn post(&self, url: &str, body: &Value) -> Result<Value> {
        let max = self.policy.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.attempt(url, body, attempt) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retriable(e)) if attempt >= max => return Err(e),
                Err(Failure::Retriable(e)) => {
                    log::warn!("attempt {attempt}/{max} failed: {e}; retrying");
                    thread::sleep(self.policy.backoff(attempt - 1));
                    attempt += 1;
                }
            }
        }
    }
}
