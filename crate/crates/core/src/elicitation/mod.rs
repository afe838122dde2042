//! Querying a chat-completion endpoint across a scenario's `t` grid and
//! turning the replies into [`ElicitationRecord`]s.

mod client;
pub mod mock;
mod parse;
mod scenario;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{elicit, elicit_async, ClientConfig, ElicitationRun, API_KEY_ENV};
pub use parse::parse_response;
pub use scenario::{builtin_scenarios, render_prompt, ScenarioDef, ScenarioRegistry};

#[derive(Debug, Error)]
pub enum ElicitError {
    #[error("scenario `{id}`: {reason}")]
    InvalidScenario { id: String, reason: String },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario file: {0}")]
    ScenarioFile(String),
    #[error("t = {t} outside scenario `{id}` range [{min}, {max}]")]
    OutOfRange {
        id: String,
        t: i64,
        min: i64,
        max: i64,
    },
    #[error("invalid client configuration: {0}")]
    InvalidConfig(String),
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("authentication rejected by endpoint (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("http client: {0}")]
    Http(#[from] reqwest::Error),
    #[error("runtime: {0}")]
    Runtime(#[from] std::io::Error),
}

/// One raw query of the predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationRecord {
    pub scenario_id: String,
    pub t: i64,
    pub replicate: u32,
    /// Reply text, or the error text when the query failed.
    pub raw_response: String,
    pub parsed_value: Option<f64>,
    pub valid: bool,
    pub model_id: String,
    pub timestamp: DateTime<Utc>,
}

impl ElicitationRecord {
    /// Builds a record from a reply, parsing it against the scenario's marker.
    pub fn from_reply(
        scenario: &ScenarioDef,
        t: i64,
        replicate: u32,
        raw_response: String,
        model_id: &str,
        timestamp: DateTime<Utc>,
    ) -> Self {
        let parsed_value = parse_response(&raw_response, &scenario.answer_marker);
        Self::with_value(
            scenario.id.clone(),
            t,
            replicate,
            raw_response,
            parsed_value,
            model_id,
            timestamp,
        )
    }

    /// `valid` is derived: a parsed value that is finite and positive.
    pub fn with_value(
        scenario_id: String,
        t: i64,
        replicate: u32,
        raw_response: String,
        parsed_value: Option<f64>,
        model_id: &str,
        timestamp: DateTime<Utc>,
    ) -> Self {
        let valid = parsed_value.is_some_and(|v| v.is_finite() && v > 0.0);
        ElicitationRecord {
            scenario_id,
            t,
            replicate,
            raw_response,
            parsed_value,
            valid,
            model_id: model_id.to_string(),
            timestamp,
        }
    }
}
