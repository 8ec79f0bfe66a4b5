//! Client for a remote yes/no VQA service.
//!
//! Wire contract: `POST {endpoint}/v1/answer` with
//! `{"question": ..., "image": ...}`, answered by
//! `{"answer": "yes" | "no", "confidence": 0..1}`.

use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Answer, Oracle, Question, Reply, VqaError};
use crate::worldsim::Observation;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("service returned HTTP {0}")]
    Status(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout: Duration,
    /// Turn timeouts, bad statuses and malformed bodies into a `No`.
    /// Transport failures always surface.
    pub abstain_as_no: bool,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            timeout: DEFAULT_TIMEOUT,
            abstain_as_no: true,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    question: &'a str,
    image: &'a str,
}

#[derive(Deserialize)]
struct Response {
    answer: String,
    confidence: f64,
}

/// Maps a service reply to yes/no: the probability of "yes" must exceed 0.5.
pub fn map_reply(answer: &str, confidence: f64) -> Result<Reply, RemoteError> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(RemoteError::Malformed(format!("confidence {confidence} is outside [0, 1]")));
    }
    let p_yes = match answer.trim().to_ascii_lowercase().as_str() {
        "yes" => confidence,
        "no" => 1.0 - confidence,
        other => return Err(RemoteError::Malformed(format!("answer `{other}` is neither yes nor no"))),
    };
    Ok(Reply::from_bool(p_yes > 0.5))
}

pub struct RemoteOracle {
    pub config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteOracle { config, agent }
    }

    fn classify(&self, e: ureq::Error) -> RemoteError {
        match e {
            ureq::Error::Timeout(_) => RemoteError::Timeout(self.config.timeout),
            ureq::Error::Io(io) if matches!(io.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
                RemoteError::Timeout(self.config.timeout)
            }
            ureq::Error::Io(io) => RemoteError::Transport(io.to_string()),
            ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::BadUri(_) => {
                RemoteError::Transport(e.to_string())
            }
            ureq::Error::StatusCode(code) => RemoteError::Status(code),
            other => RemoteError::Malformed(other.to_string()),
        }
    }

    /// One round trip; errors are returned as-is without abstention.
    pub fn ask(&self, question: &str, image: &str) -> Result<Reply, RemoteError> {
        let url = format!("{}/v1/answer", self.config.endpoint.trim_end_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .send_json(Request { question, image })
            .map_err(|e| self.classify(e))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(RemoteError::Status(status));
        }
        let body = resp.body_mut().read_to_string().map_err(|e| match self.classify(e) {
            RemoteError::Transport(m) => RemoteError::Malformed(m),
            other => other,
        })?;
        let parsed: Response = serde_json::from_str(&body).map_err(|e| RemoteError::Malformed(e.to_string()))?;
        map_reply(&parsed.answer, parsed.confidence)
    }
}

/// Asks the service once, applying the abstention policy.
pub fn remote_answer(question: &Question, image_ref: &str, oracle: &RemoteOracle) -> Result<Answer, RemoteError> {
    match oracle.ask(&question.text, image_ref) {
        Ok(reply) => Ok(Answer {
            reply,
            truthful: None,
            abstained: false,
        }),
        Err(RemoteError::Transport(m)) => Err(RemoteError::Transport(m)),
        Err(_) if oracle.config.abstain_as_no => Ok(Answer {
            reply: Reply::No,
            truthful: None,
            abstained: true,
        }),
        Err(e) => Err(e),
    }
}

impl Oracle for RemoteOracle {
    fn answer(&mut self, question: &Question, observation: &Observation) -> Result<Answer, VqaError> {
        let image = observation.image_ref.as_deref().unwrap_or("");
        Ok(remote_answer(question, image, self)?)
    }
}
