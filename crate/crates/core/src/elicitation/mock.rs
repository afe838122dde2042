//! A scripted chat-completion server speaking the same wire format as the
//! client, for tests and offline dry runs.
//!
//! A script is a JSON object:
//!
//! ```json
//! {
//!   "reply": "Predicted_number_of_minutes= {2t}",
//!   "failures": [429, 429],
//!   "api_key": "test-key"
//! }
//! ```
//!
//! `reply` may contain `{t}` and `{<k>t}` (e.g. `{2t}`, `{1.5t}`), where `t`
//! is the last integer in the prompt. `failures` lists HTTP statuses returned,
//! in order, before the reply for each distinct prompt. When `api_key` is set,
//! requests with any other bearer token get 401.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, LazyLock, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;

static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("valid pattern"));
static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{(\d+(?:\.\d+)?)?t\}").expect("valid pattern"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub reply: String,
    #[serde(default)]
    pub failures: Vec<u16>,
    #[serde(default)]
    pub api_key: Option<String>,
}

impl MockScript {
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Reply text for a prompt, with placeholders filled from its last integer.
    pub fn render_reply(&self, prompt: &str) -> String {
        let t: Option<f64> = INTEGER
            .find_iter(prompt)
            .last()
            .and_then(|m| m.as_str().parse().ok());
        PLACEHOLDER
            .replace_all(&self.reply, |caps: &regex::Captures<'_>| {
                let Some(t) = t else { return String::new() };
                let k: f64 = caps
                    .get(1)
                    .map_or(1.0, |m| m.as_str().parse().unwrap_or(1.0));
                format!("{}", k * t)
            })
            .into_owned()
    }
}

/// One request as received by the mock.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedRequest {
    pub authorization: Option<String>,
    pub body: Value,
    pub status: u16,
}

#[derive(Debug)]
struct MockState {
    script: MockScript,
    attempts: Mutex<HashMap<String, usize>>,
    log: Mutex<Vec<ReceivedRequest>>,
}

impl MockState {
    fn record(&self, authorization: Option<String>, body: Value, status: StatusCode) {
        self.log.lock().expect("log lock").push(ReceivedRequest {
            authorization,
            body,
            status: status.as_u16(),
        });
    }
}

fn validate_body(body: &Value) -> Result<&str, String> {
    if !body.get("model").is_some_and(Value::is_string) {
        return Err("`model` must be a string".into());
    }
    if !body.get("temperature").is_some_and(Value::is_number) {
        return Err("`temperature` must be a number".into());
    }
    let messages = body
        .get("messages")
        .and_then(Value::as_array)
        .ok_or("`messages` must be an array")?;
    match messages.as_slice() {
        [only] if only.get("role").and_then(Value::as_str) == Some("user") => only
            .get("content")
            .and_then(Value::as_str)
            .ok_or_else(|| "message content must be a string".into()),
        _ => Err("expected exactly one user message".into()),
    }
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": { "message": message } }))).into_response()
}

async fn handle(State(state): State<Arc<MockState>>, headers: HeaderMap, body: String) -> Response {
    let authorization = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let Ok(body) = serde_json::from_str::<Value>(&body) else {
        state.record(authorization, Value::Null, StatusCode::BAD_REQUEST);
        return error(StatusCode::BAD_REQUEST, "body is not JSON");
    };
    if let Some(key) = &state.script.api_key {
        if authorization.as_deref() != Some(format!("Bearer {key}").as_str()) {
            state.record(authorization, body, StatusCode::UNAUTHORIZED);
            return error(StatusCode::UNAUTHORIZED, "invalid api key");
        }
    }
    let prompt = match validate_body(&body) {
        Ok(prompt) => prompt.to_string(),
        Err(msg) => {
            state.record(authorization, body, StatusCode::BAD_REQUEST);
            return error(StatusCode::BAD_REQUEST, &msg);
        }
    };
    let attempt = {
        let mut attempts = state.attempts.lock().expect("attempts lock");
        let n = attempts.entry(prompt.clone()).or_insert(0);
        *n += 1;
        *n - 1
    };
    if let Some(&code) = state.script.failures.get(attempt) {
        let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        state.record(authorization, body, status);
        return error(status, "scripted failure");
    }
    let content = state.script.render_reply(&prompt);
    state.record(authorization, body, StatusCode::OK);
    Json(json!({
        "id": format!("mock-{attempt}"),
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": content },
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

fn router(state: Arc<MockState>) -> axum::Router {
    axum::Router::new()
        .fallback(axum::routing::post(handle))
        .with_state(state)
}

fn new_state(script: MockScript) -> Arc<MockState> {
    Arc::new(MockState {
        script,
        attempts: Mutex::new(HashMap::new()),
        log: Mutex::new(Vec::new()),
    })
}

/// Serves `script` on `addr` until the process exits.
pub async fn serve(script: MockScript, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "mock chat endpoint listening on http://{}/v1/chat/completions",
        listener.local_addr()?
    );
    axum::serve(listener, router(new_state(script))).await
}

/// A mock running on a background thread, by default on an ephemeral local port.
/// Shuts down on drop.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(script: MockScript) -> std::io::Result<Self> {
        Self::start_at(script, SocketAddr::from(([127, 0, 0, 1], 0)))
    }

    pub fn start_at(script: MockScript, addr: SocketAddr) -> std::io::Result<Self> {
        let state = new_state(script);
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let thread = std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("mock runtime");
            runtime.block_on(async move {
                let listener =
                    tokio::net::TcpListener::from_std(std_listener).expect("mock listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(MockServer {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Chat-completions URL on this server.
    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn requests(&self) -> Vec<ReceivedRequest> {
        self.state.log.lock().expect("log lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_placeholders() {
        let script = MockScript {
            reply: "Predicted_number_of_minutes= {2t}".into(),
            failures: vec![],
            api_key: None,
        };
        let prompt = "at 4000 BC ruling for 12 years. Predicted_number_of_years=";
        assert_eq!(
            script.render_reply(prompt),
            "Predicted_number_of_minutes= 24"
        );
        let script = MockScript {
            reply: "{t} then {1.5t}".into(),
            ..script
        };
        assert_eq!(script.render_reply("line 10 of"), "10 then 15");
    }

    #[test]
    fn body_validation() {
        let good =
            json!({"model": "m", "temperature": 0, "messages": [{"role": "user", "content": "x"}]});
        assert_eq!(validate_body(&good), Ok("x"));
        let two = json!({"model": "m", "temperature": 0, "messages": [
            {"role": "system", "content": "s"}, {"role": "user", "content": "x"}]});
        assert!(validate_body(&two).is_err());
        let no_model = json!({"temperature": 0, "messages": []});
        assert!(validate_body(&no_model).is_err());
    }

    #[test]
    fn script_json() {
        let s: MockScript = serde_json::from_str(r#"{"reply": "ok"}"#).unwrap();
        assert!(s.failures.is_empty());
        assert!(s.api_key.is_none());
    }
}
