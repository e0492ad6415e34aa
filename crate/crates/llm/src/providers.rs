//! HTTP adapters for the common chat APIs, and the endpoint config file.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::endpoint::{ChatEndpoint, Decoding, EndpointError, Message, Role};

pub const ANTHROPIC_VERSION: &str = "2023-06-01";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    /// `/chat/completions`, also served by Together and most local servers.
    OpenAi,
    Anthropic,
    Gemini,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub name: String,
    pub provider: Provider,
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, flatten)]
    pub decoding: Decoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EndpointFile {
    #[serde(default, rename = "endpoint")]
    pub endpoints: Vec<EndpointConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("no endpoint named {0:?}")]
    UnknownEndpoint(String),
    #[error("duplicate endpoint name {0:?}")]
    Duplicate(String),
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("building HTTP client: {0}")]
    Client(String),
}

impl EndpointFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: EndpointFile = toml::from_str(text)?;
        let mut seen = BTreeMap::new();
        for e in &file.endpoints {
            if seen.insert(e.name.as_str(), ()).is_some() {
                return Err(ConfigError::Duplicate(e.name.clone()));
            }
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn get(&self, name: &str) -> Result<&EndpointConfig, ConfigError> {
        self.endpoints.iter().find(|e| e.name == name).ok_or_else(|| ConfigError::UnknownEndpoint(name.to_owned()))
    }
}

pub struct HttpEndpoint {
    config: EndpointConfig,
    api_key: Option<String>,
    client: Client,
}

impl HttpEndpoint {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: EndpointConfig) -> Result<Self, ConfigError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ConfigError::MissingKey(var.clone()))?),
            None => None,
        };
        Self::new(config, api_key)
    }

    pub fn new(config: EndpointConfig, api_key: Option<String>) -> Result<Self, ConfigError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ConfigError::Client(e.to_string()))?;
        Ok(Self { config, api_key, client })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn url(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.provider {
            Provider::OpenAi => format!("{base}/chat/completions"),
            Provider::Anthropic => format!("{base}/v1/messages"),
            Provider::Gemini => format!("{base}/v1beta/models/{}:generateContent", self.config.model),
        }
    }
}

/// Merges the request-level decoding over the configured defaults.
fn merged(config: &Decoding, call: &Decoding) -> Decoding {
    Decoding {
        temperature: call.temperature.or(config.temperature),
        max_tokens: call.max_tokens.or(config.max_tokens),
        reasoning_effort: call.reasoning_effort.clone().or_else(|| config.reasoning_effort.clone()),
    }
}

pub fn request_body(provider: Provider, model: &str, messages: &[Message], decoding: &Decoding) -> Value {
    match provider {
        Provider::OpenAi => {
            let mut body = json!({ "model": model, "messages": messages });
            if let Some(t) = decoding.temperature {
                body["temperature"] = json!(t);
            }
            if let Some(m) = decoding.max_tokens {
                body["max_tokens"] = json!(m);
            }
            if let Some(r) = &decoding.reasoning_effort {
                body["reasoning_effort"] = json!(r);
            }
            body
        }
        Provider::Anthropic => {
            let system: Vec<&str> =
                messages.iter().filter(|m| m.role == Role::System).map(|m| m.content.as_str()).collect();
            let turns: Vec<&Message> = messages.iter().filter(|m| m.role != Role::System).collect();
            let mut body = json!({
                "model": model,
                "messages": turns,
                "max_tokens": decoding.max_tokens.unwrap_or(4096),
            });
            if !system.is_empty() {
                body["system"] = json!(system.join("\n\n"));
            }
            if let Some(t) = decoding.temperature {
                body["temperature"] = json!(t);
            }
            body
        }
        Provider::Gemini => {
            let system: Vec<&str> =
                messages.iter().filter(|m| m.role == Role::System).map(|m| m.content.as_str()).collect();
            let contents: Vec<Value> = messages
                .iter()
                .filter(|m| m.role != Role::System)
                .map(|m| {
                    let role = if m.role == Role::Assistant { "model" } else { "user" };
                    json!({ "role": role, "parts": [{ "text": m.content }] })
                })
                .collect();
            let mut body = json!({ "contents": contents });
            if !system.is_empty() {
                body["systemInstruction"] = json!({ "parts": [{ "text": system.join("\n\n") }] });
            }
            let mut gen = serde_json::Map::new();
            if let Some(t) = decoding.temperature {
                gen.insert("temperature".into(), json!(t));
            }
            if let Some(m) = decoding.max_tokens {
                gen.insert("maxOutputTokens".into(), json!(m));
            }
            if !gen.is_empty() {
                body["generationConfig"] = Value::Object(gen);
            }
            body
        }
    }
}

pub fn response_text(provider: Provider, body: &Value) -> Result<String, EndpointError> {
    let text = match provider {
        Provider::OpenAi => body.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_owned),
        Provider::Anthropic => body.get("content").and_then(Value::as_array).map(|blocks| {
            blocks
                .iter()
                .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                .filter_map(|b| b.get("text").and_then(Value::as_str))
                .collect::<String>()
        }),
        Provider::Gemini => body
            .pointer("/candidates/0/content/parts")
            .and_then(Value::as_array)
            .map(|parts| parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<String>()),
    };
    text.ok_or_else(|| EndpointError::Protocol(body.to_string()))
}

impl ChatEndpoint for HttpEndpoint {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn complete(&self, messages: &[Message], decoding: &Decoding) -> Result<String, EndpointError> {
        let decoding = merged(&self.config.decoding, decoding);
        let body = request_body(self.config.provider, &self.config.model, messages, &decoding);
        let mut req = self.client.post(self.url()).json(&body);
        if let Some(key) = &self.api_key {
            req = match self.config.provider {
                Provider::OpenAi => req.bearer_auth(key),
                Provider::Anthropic => req.header("x-api-key", key).header("anthropic-version", ANTHROPIC_VERSION),
                Provider::Gemini => req.header("x-goog-api-key", key),
            };
        } else if self.config.provider == Provider::Anthropic {
            req = req.header("anthropic-version", ANTHROPIC_VERSION);
        }
        let resp = req.send().map_err(|e| EndpointError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| EndpointError::Transport(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(EndpointError::Transport(format!("status {status}: {text}")));
        }
        if !status.is_success() {
            return Err(EndpointError::Rejected { status: status.as_u16(), body: text });
        }
        let json: Value = serde_json::from_str(&text).map_err(|e| EndpointError::Protocol(e.to_string()))?;
        response_text(self.config.provider, &json)
    }
}
