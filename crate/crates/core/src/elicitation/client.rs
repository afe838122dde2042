use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use chrono::Utc;
use futures::stream::{self, StreamExt, TryStreamExt};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tokio::time::Instant;

use super::{ElicitError, ElicitationRecord, ScenarioDef};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "PRIOR_LENS_API_KEY";

#[derive(Clone)]
pub struct ClientConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub api_key: String,
    pub temperature: f64,
    pub max_in_flight: usize,
    /// Retries after the first attempt for 429, 5xx and transport failures.
    pub retry_max: u32,
    pub retry_base_delay: Duration,
    pub timeout: Duration,
    /// Token-bucket dispatch rate; `None` leaves dispatch unthrottled.
    pub requests_per_minute: Option<f64>,
}

impl fmt::Debug for ClientConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientConfig")
            .field("endpoint_url", &self.endpoint_url)
            .field("model_id", &self.model_id)
            .field("api_key", &"<redacted>")
            .field("temperature", &self.temperature)
            .field("max_in_flight", &self.max_in_flight)
            .field("retry_max", &self.retry_max)
            .field("retry_base_delay", &self.retry_base_delay)
            .field("timeout", &self.timeout)
            .field("requests_per_minute", &self.requests_per_minute)
            .finish()
    }
}

impl ClientConfig {
    pub fn new(
        endpoint_url: impl Into<String>,
        model_id: impl Into<String>,
        api_key: impl Into<String>,
    ) -> Self {
        ClientConfig {
            endpoint_url: endpoint_url.into(),
            model_id: model_id.into(),
            api_key: api_key.into(),
            temperature: 0.0,
            max_in_flight: 4,
            retry_max: 5,
            retry_base_delay: Duration::from_secs(1),
            timeout: Duration::from_secs(60),
            requests_per_minute: None,
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(
        endpoint_url: impl Into<String>,
        model_id: impl Into<String>,
    ) -> Result<Self, ElicitError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(ElicitError::MissingCredential(API_KEY_ENV))?;
        Ok(ClientConfig::new(endpoint_url, model_id, key))
    }

    pub fn validate(&self) -> Result<(), ElicitError> {
        let bad = |m: &str| Err(ElicitError::InvalidConfig(m.to_string()));
        if self.api_key.is_empty() {
            return Err(ElicitError::MissingCredential(API_KEY_ENV));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be >= 0");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be >= 1");
        }
        if self.timeout.is_zero() {
            return bad("timeout must be positive");
        }
        if let Some(rpm) = self.requests_per_minute {
            if !(rpm > 0.0 && rpm.is_finite()) {
                return bad("requests_per_minute must be > 0");
            }
        }
        if reqwest::Url::parse(&self.endpoint_url).is_err() {
            return bad("endpoint_url is not a valid URL");
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// Records for one scenario run plus transport statistics.
#[derive(Debug, Clone)]
pub struct ElicitationRun {
    /// Sorted by `(t, replicate)`.
    pub records: Vec<ElicitationRecord>,
    pub retries: u64,
}

impl ElicitationRun {
    pub fn valid_count(&self) -> usize {
        self.records.iter().filter(|r| r.valid).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.records.len() - self.valid_count()
    }
}

enum Failure {
    Retryable(String),
    Record(String),
    Auth { status: u16, body: String },
}

struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(per_minute: f64, capacity: usize) -> Self {
        let capacity = capacity.max(1) as f64;
        TokenBucket {
            capacity,
            per_second: per_minute / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    async fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().await;
                let now = Instant::now();
                let refilled =
                    state.0 + now.duration_since(state.1).as_secs_f64() * self.per_second;
                *state = (refilled.min(self.capacity), now);
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.per_second)
            };
            tokio::time::sleep(wait).await;
        }
    }
}

struct Session<'a> {
    http: reqwest::Client,
    cfg: &'a ClientConfig,
    scenario: &'a ScenarioDef,
    bucket: Option<TokenBucket>,
    retries: AtomicU64,
}

impl Session<'_> {
    async fn attempt(&self, prompt: &str) -> Result<String, Failure> {
        let body = ChatRequest {
            model: &self.cfg.model_id,
            temperature: self.cfg.temperature,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let response = self
            .http
            .post(&self.cfg.endpoint_url)
            .bearer_auth(&self.cfg.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        let status = response.status();
        if status.is_success() {
            let reply: ChatResponse = response
                .json()
                .await
                .map_err(|e| Failure::Record(format!("malformed reply: {e}")))?;
            return reply
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| Failure::Record("reply has no choices[0].message.content".into()));
        }
        let text = response.text().await.unwrap_or_default();
        match status {
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => Err(Failure::Auth {
                status: status.as_u16(),
                body: text,
            }),
            StatusCode::TOO_MANY_REQUESTS => {
                Err(Failure::Retryable(format!("HTTP {status}: {text}")))
            }
            s if s.is_server_error() => Err(Failure::Retryable(format!("HTTP {status}: {text}"))),
            _ => Err(Failure::Record(format!("HTTP {status}: {text}"))),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let jitter = 0.5 + 0.5 * rand::random::<f64>();
        self.cfg
            .retry_base_delay
            .mul_f64(2f64.powi(attempt.min(30) as i32) * jitter)
    }

    async fn query(
        &self,
        t: i64,
        replicate: u32,
        prompt: &str,
    ) -> Result<ElicitationRecord, ElicitError> {
        let mut attempt = 0;
        let outcome = loop {
            if let Some(bucket) = &self.bucket {
                bucket.acquire().await;
            }
            match self.attempt(prompt).await {
                Ok(text) => break Ok(text),
                Err(Failure::Auth { status, body }) => {
                    return Err(ElicitError::Auth { status, body })
                }
                Err(Failure::Record(msg)) => break Err(msg),
                Err(Failure::Retryable(msg)) if attempt >= self.cfg.retry_max => {
                    break Err(format!(
                        "retries exhausted after {} attempts: {msg}",
                        attempt + 1
                    ))
                }
                Err(Failure::Retryable(msg)) => {
                    let delay = self.backoff(attempt);
                    attempt += 1;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    log::warn!(
                        "{} t={t} replicate={replicate}: {msg}; retry {attempt}/{} in {delay:?}",
                        self.scenario.id,
                        self.cfg.retry_max
                    );
                    tokio::time::sleep(delay).await;
                }
            }
        };
        let now = Utc::now();
        Ok(match outcome {
            Ok(text) => ElicitationRecord::from_reply(
                self.scenario,
                t,
                replicate,
                text,
                &self.cfg.model_id,
                now,
            ),
            Err(msg) => {
                log::warn!("{} t={t} replicate={replicate}: {msg}", self.scenario.id);
                ElicitationRecord::with_value(
                    self.scenario.id.clone(),
                    t,
                    replicate,
                    format!("error: {msg}"),
                    None,
                    &self.cfg.model_id,
                    now,
                )
            }
        })
    }
}

/// Queries every `(t, replicate)` on the scenario grid.
///
/// At most `max_in_flight` requests run at once. Records come back sorted by
/// `(t, replicate)` whatever the completion order. A rejected credential
/// aborts the whole run; every other failure becomes an invalid record.
pub async fn elicit_async(
    scenario: &ScenarioDef,
    cfg: &ClientConfig,
    replicates: u32,
) -> Result<ElicitationRun, ElicitError> {
    scenario.validate()?;
    cfg.validate()?;
    if replicates == 0 {
        return Err(ElicitError::InvalidConfig("replicates must be >= 1".into()));
    }
    let session = Session {
        http: reqwest::Client::builder().timeout(cfg.timeout).build()?,
        cfg,
        scenario,
        bucket: cfg
            .requests_per_minute
            .map(|rpm| TokenBucket::new(rpm, cfg.max_in_flight)),
        retries: AtomicU64::new(0),
    };

    let mut jobs = Vec::new();
    for t in scenario.grid() {
        let prompt = scenario.render_prompt(t)?;
        for replicate in 0..replicates {
            jobs.push((t, replicate, prompt.clone()));
        }
    }

    let session = &session;
    let mut records: Vec<ElicitationRecord> = stream::iter(jobs)
        .map(|(t, replicate, prompt)| async move { session.query(t, replicate, &prompt).await })
        .buffer_unordered(cfg.max_in_flight)
        .try_collect()
        .await?;
    records.sort_by_key(|r| (r.t, r.replicate));
    Ok(ElicitationRun {
        records,
        retries: session.retries.load(Ordering::Relaxed),
    })
}

/// Blocking wrapper around [`elicit_async`] on a private runtime.
pub fn elicit(
    scenario: &ScenarioDef,
    cfg: &ClientConfig,
    replicates: u32,
) -> Result<ElicitationRun, ElicitError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(elicit_async(scenario, cfg, replicates))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = ClientConfig::new("http://127.0.0.1:1/v1/chat/completions", "m", "k");
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.api_key.clear();
        assert!(matches!(
            c.validate(),
            Err(ElicitError::MissingCredential(_))
        ));
        let mut c = ok.clone();
        c.max_in_flight = 0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.endpoint_url = "not a url".into();
        assert!(c.validate().is_err());
        let mut c = ok;
        c.temperature = -0.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn debug_redacts_key() {
        let c = ClientConfig::new("http://x", "m", "secret-key");
        assert!(!format!("{c:?}").contains("secret-key"));
    }

    #[test]
    fn request_body_shape() {
        let body = ChatRequest {
            model: "gpt-4",
            temperature: 0.0,
            messages: [ChatMessage {
                role: "user",
                content: "hi",
            }],
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"model":"gpt-4","temperature":0.0,"messages":[{"role":"user","content":"hi"}]}"#
        );
    }

    #[tokio::test(flavor = "current_thread", start_paused = true)]
    async fn token_bucket_spaces_dispatch() {
        let bucket = TokenBucket::new(60.0, 2);
        let start = Instant::now();
        for _ in 0..4 {
            bucket.acquire().await;
        }
        // two from the initial burst, then one per second
        let elapsed = start.elapsed().as_secs_f64();
        assert!((1.9..2.5).contains(&elapsed), "{elapsed}");
    }
}
