//! Provider-agnostic chat completion.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

/// Decoding parameters; `None` leaves the provider default in place.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<String>,
}

impl Decoding {
    pub fn deterministic() -> Self {
        Self { temperature: Some(0.0), max_tokens: Some(4096), reasoning_effort: None }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EndpointError {
    /// Connection failures, timeouts, rate limiting and server errors.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Protocol(String),
    #[error("scripted endpoint has no reply left")]
    Exhausted,
}

impl EndpointError {
    pub fn is_transport(&self) -> bool {
        matches!(self, EndpointError::Transport(_))
    }
}

pub trait ChatEndpoint: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, messages: &[Message], decoding: &Decoding) -> Result<String, EndpointError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_secs(2) }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self { attempts, base_delay: Duration::ZERO }
    }

    /// Runs `call` until it succeeds, fails with a non-transport error, or
    /// the attempts run out. Returns the last error and the attempt count.
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, EndpointError>) -> (Result<T, EndpointError>, u32) {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match call() {
                Err(e) if e.is_transport() && attempt < self.attempts.max(1) => {
                    log::warn!("attempt {attempt} failed: {e}");
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    delay *= 2;
                    attempt += 1;
                }
                other => return (other, attempt),
            }
        }
    }
}

/// Minimum spacing between requests, shared by every teacher in a run.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        Self::with_interval(Duration::from_secs(60) / requests.max(1))
    }

    pub fn with_interval(interval: Duration) -> Self {
        Self { interval, next: Mutex::new(None) }
    }

    /// Blocks until the caller may send a request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

type Responder = dyn Fn(&[Message]) -> Result<String, EndpointError> + Send + Sync;

/// Offline endpoint for tests and dry runs.
pub struct ScriptedEndpoint {
    name: String,
    queue: Mutex<VecDeque<Result<String, EndpointError>>>,
    responder: Option<Box<Responder>>,
    calls: Mutex<usize>,
}

impl ScriptedEndpoint {
    /// Replies from `replies` in order, then fails with `Exhausted`.
    pub fn queue(name: impl Into<String>, replies: impl IntoIterator<Item = Result<String, EndpointError>>) -> Self {
        Self {
            name: name.into(),
            queue: Mutex::new(replies.into_iter().collect()),
            responder: None,
            calls: Mutex::new(0),
        }
    }

    /// Computes each reply from the conversation so far.
    pub fn from_fn(
        name: impl Into<String>,
        f: impl Fn(&[Message]) -> Result<String, EndpointError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            queue: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
            calls: Mutex::new(0),
        }
    }

    pub fn fixed(name: impl Into<String>, reply: impl Into<String>) -> Self {
        let reply = reply.into();
        Self::from_fn(name, move |_| Ok(reply.clone()))
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("calls lock")
    }
}

impl ChatEndpoint for ScriptedEndpoint {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &[Message], _decoding: &Decoding) -> Result<String, EndpointError> {
        *self.calls.lock().expect("calls lock") += 1;
        if let Some(f) = &self.responder {
            return f(messages);
        }
        self.queue.lock().expect("queue lock").pop_front().unwrap_or(Err(EndpointError::Exhausted))
    }
}
