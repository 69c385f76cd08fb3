//! Blocking client for OpenAI-compatible chat-completions endpoints.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::parse::{parse_response, SynonymTable};
use super::prompt::{build_prompt, example_set, response_schema, ChatMessage, ImageRef, PROMPT_VERSION};
use super::{GraphError, GraphPrediction, GraphSource, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmConfig {
    /// Base URL (`.../v1`) or the full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub example_set: String,
    pub max_concurrency: usize,
    pub synonyms: SynonymTable,
}

impl Default for VlmConfig {
    fn default() -> Self {
        VlmConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o-2024-08-06".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_retries: 2,
            timeout_secs: 60.0,
            example_set: PROMPT_VERSION.into(),
            max_concurrency: 4,
            synonyms: SynonymTable::default(),
        }
    }
}

impl VlmConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(GraphError::Config("timeout must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(GraphError::Config("max_concurrency must be at least 1".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        let e = self.endpoint.trim_end_matches('/');
        if e.ends_with("/chat/completions") {
            e.to_string()
        } else {
            format!("{e}/chat/completions")
        }
    }

    /// Upper bound on the wall time of one prediction.
    pub fn deadline(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs * (self.max_retries as f64 + 1.0))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Transport(String),
    Parse(GraphError),
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

impl Permits {
    fn acquire(&self, until: Instant) -> Option<Permit<'_>> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            let now = Instant::now();
            if now >= until {
                return None;
            }
            free = self.cv.wait_timeout(free, until - now).expect("permit lock").0;
        }
        *free -= 1;
        Some(Permit(self))
    }
}

/// Holds no HTTP client between calls: the blocking client owns a runtime
/// that must not be dropped inside async code, and services keep this
/// struct in async state.
#[derive(Debug, Clone)]
pub struct VlmClient {
    cfg: VlmConfig,
    permits: Arc<Permits>,
}

impl VlmClient {
    pub fn new(cfg: VlmConfig) -> Result<Self> {
        cfg.check()?;
        let permits = Arc::new(Permits {
            free: Mutex::new(cfg.max_concurrency),
            cv: Condvar::new(),
        });
        Ok(VlmClient { cfg, permits })
    }

    pub fn config(&self) -> &VlmConfig {
        &self.cfg
    }

    /// Asks the model for the image's connectivity graph, re-asking on
    /// transport errors and unparseable answers with exponential backoff.
    pub fn predict(&self, image: &ImageRef) -> Result<GraphPrediction> {
        let start = Instant::now();
        let deadline = start + self.cfg.deadline();
        let key = std::env::var(&self.cfg.api_key_env)
            .map_err(|_| GraphError::AuthFailed(format!("environment variable {} is not set", self.cfg.api_key_env)))?;
        let examples = example_set(&self.cfg.example_set)?;
        let messages = build_prompt(image, &examples, response_schema())?;
        let _permit = self.permits.acquire(deadline).ok_or(GraphError::Busy)?;
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GraphError::Config(e.to_string()))?;

        let timeout = Duration::from_secs_f64(self.cfg.timeout_secs);
        let mut last: Option<Failure> = None;
        let mut any_parse_failure = false;
        let mut attempts = 0;
        for attempt in 0..=self.cfg.max_retries {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            attempts += 1;
            let budget = timeout.min(deadline - now);
            match self.request(&http, &key, &messages, budget) {
                Ok(text) => match parse_response(&text, &self.cfg.synonyms) {
                    Ok(graph) => {
                        return Ok(GraphPrediction {
                            graph,
                            raw_response: text,
                            source: GraphSource::Vlm,
                            attempts,
                        })
                    }
                    Err(e) => {
                        debug!(attempt, error = %e, "unparseable model response");
                        any_parse_failure = true;
                        last = Some(Failure::Parse(e));
                    }
                },
                Err(Ok(auth)) => return Err(auth),
                Err(Err(msg)) => {
                    warn!(attempt, error = %msg, "chat request failed");
                    last = Some(Failure::Transport(msg));
                }
            }
            if attempt < self.cfg.max_retries {
                let backoff = Duration::from_millis(100u64 << attempt.min(6));
                let left = deadline.saturating_duration_since(Instant::now());
                std::thread::sleep(backoff.min(left));
            }
        }
        Err(match last {
            Some(Failure::Transport(msg)) if !any_parse_failure => GraphError::Unreachable(msg),
            Some(Failure::Parse(e)) => GraphError::RetriesExhausted {
                attempts,
                last: e.to_string(),
            },
            Some(Failure::Transport(msg)) => GraphError::RetriesExhausted { attempts, last: msg },
            None => GraphError::Unreachable("deadline passed before the first attempt".into()),
        })
    }

    /// `Err(Ok(_))` is a terminal error, `Err(Err(_))` a retryable one.
    fn request(
        &self,
        http: &reqwest::blocking::Client,
        key: &str,
        messages: &[ChatMessage],
        timeout: Duration,
    ) -> std::result::Result<String, std::result::Result<GraphError, String>> {
        let body = ChatRequest {
            model: &self.cfg.model,
            messages,
            temperature: self.cfg.temperature,
        };
        let resp = http
            .post(self.cfg.url())
            .bearer_auth(key)
            .timeout(timeout)
            .json(&body)
            .send()
            .map_err(|e| Err(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(Ok(GraphError::AuthFailed(format!("endpoint returned {status}"))));
        }
        if !status.is_success() {
            return Err(Err(format!("endpoint returned {status}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| Err(e.to_string()))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

pub fn predict_vlm(image: &ImageRef, cfg: &VlmConfig) -> Result<GraphPrediction> {
    VlmClient::new(cfg.clone())?.predict(image)
}
