//! Text-completion clients: scripted and echo mocks, a recorder, and a live
//! HTTP client for chat-completion endpoints.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::chunk::estimate_tokens;
use super::prompt::{CARD_CLOSE, CARD_OPEN};
use super::schema::{field_kind, FieldKind};
use crate::strategy::StrategyRegistry;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    /// Fields the request asks for; mocks use this, live clients ignore it.
    pub fields: Vec<String>,
}

impl CompletionRequest {
    pub fn token_estimate(&self) -> usize {
        estimate_tokens(&self.system) + estimate_tokens(&self.user)
    }

    /// Card text between the markers of the user message.
    pub fn card_text(&self) -> &str {
        let start = self.user.find(CARD_OPEN).map_or(0, |i| i + CARD_OPEN.len());
        let end = self.user.rfind(CARD_CLOSE).filter(|&e| e >= start).unwrap_or(self.user.len());
        &self.user[start..end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    /// Worth retrying: timeouts, rate limiting, server errors.
    #[error("transient client failure: {0}")]
    Transient(String),
    #[error("client failure: {0}")]
    Fatal(String),
}

pub trait CompletionClient: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

/// Always answers with an empty object.
#[derive(Debug, Default)]
pub struct EmptyClient;

impl CompletionClient for EmptyClient {
    fn id(&self) -> String {
        "mock-empty".into()
    }

    fn complete(&self, _: &CompletionRequest) -> Result<String, ClientError> {
        Ok("{}".into())
    }
}

/// Answers each requested field with the value of a `field: value` line in
/// the card text, when one exists.
#[derive(Debug, Default)]
pub struct EchoClient;

fn located_value<'a>(card: &'a str, field: &str) -> Option<&'a str> {
    let spaced = field.replace('_', " ");
    card.lines().find_map(|line| {
        let l = line.trim_start().trim_start_matches(['-', '*', ' ']);
        let (key, value) = l.split_once(':')?;
        let key = key.trim().trim_matches('*').trim();
        let hit = key.eq_ignore_ascii_case(field) || key.eq_ignore_ascii_case(&spaced);
        let value = value.trim().trim_matches('*').trim();
        (hit && !value.is_empty()).then_some(value)
    })
}

impl CompletionClient for EchoClient {
    fn id(&self) -> String {
        "mock-echo".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let card = request.card_text();
        let mut out = Map::new();
        for field in &request.fields {
            let Some(value) = located_value(card, field) else {
                continue;
            };
            let v = match field_kind(field) {
                Some(FieldKind::List) => json!(value.split(',').map(str::trim).collect::<Vec<_>>()),
                Some(FieldKind::Text | FieldKind::Domain | FieldKind::Count) => json!(value),
                _ => continue,
            };
            out.insert(field.clone(), v);
        }
        Ok(Value::Object(out).to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    /// Substring looked up in the system and user messages.
    pub contains: String,
    #[serde(default)]
    pub response: Option<Value>,
    #[serde(default)]
    pub error: Option<String>,
    /// Rule stops matching after this many uses.
    #[serde(default)]
    pub times: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    /// Response when no rule matches; `{}` if absent.
    #[serde(default)]
    pub default: Option<Value>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("script rule {0} has neither or both of response and error")]
    Rule(usize),
}

fn response_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// First matching rule wins; deterministic for a given script and request
/// sequence.
#[derive(Debug)]
pub struct ScriptedClient {
    script: Script,
    uses: Mutex<Vec<usize>>,
}

impl ScriptedClient {
    pub fn new(script: Script) -> Result<Self, ScriptError> {
        if let Some(i) = script
            .rules
            .iter()
            .position(|r| r.response.is_some() == r.error.is_some())
        {
            return Err(ScriptError::Rule(i));
        }
        let uses = Mutex::new(vec![0; script.rules.len()]);
        Ok(ScriptedClient { script, uses })
    }

    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        ScriptedClient::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ScriptedClient::from_json(&text)
    }
}

impl CompletionClient for ScriptedClient {
    fn id(&self) -> String {
        "mock-scripted".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let mut uses = self.uses.lock().expect("script lock");
        for (i, rule) in self.script.rules.iter().enumerate() {
            if rule.times.is_some_and(|t| uses[i] >= t) {
                continue;
            }
            if request.system.contains(&rule.contains) || request.user.contains(&rule.contains) {
                uses[i] += 1;
                return match (&rule.response, &rule.error) {
                    (Some(r), _) => Ok(response_text(r)),
                    (None, Some(e)) => Err(ClientError::Transient(e.clone())),
                    (None, None) => unreachable!("validated at construction"),
                };
            }
        }
        Ok(self.script.default.as_ref().map_or_else(|| "{}".into(), response_text))
    }
}

/// Passes requests through to an inner client and keeps a copy of each.
pub struct RecordingClient {
    inner: Arc<dyn CompletionClient>,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl RecordingClient {
    pub fn new(inner: Arc<dyn CompletionClient>) -> Self {
        RecordingClient {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().expect("recorder lock").clone()
    }
}

impl CompletionClient for RecordingClient {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        self.requests.lock().expect("recorder lock").push(request.clone());
        self.inner.complete(request)
    }
}

/// Spaces calls at least `interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = if requests == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs(60) / requests
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Retries transient failures with linear backoff; returns the last error
/// and the number of attempts made.
pub fn complete_with_retry(
    client: &dyn CompletionClient,
    request: &CompletionRequest,
    policy: RetryPolicy,
) -> Result<String, (ClientError, u32)> {
    let attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match client.complete(request) {
            Ok(text) => return Ok(text),
            Err(e @ ClientError::Fatal(_)) => return Err((e, attempt)),
            Err(e) if attempt >= attempts => return Err((e, attempt)),
            Err(e) => {
                log::warn!("{} attempt {attempt} failed: {e}", client.id());
                std::thread::sleep(policy.backoff * attempt);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    /// Environment variable holding the bearer credential.
    pub api_key_env: String,
    pub model: String,
    pub timeout: Duration,
    pub requests_per_minute: u32,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            model: "gpt-4-turbo".into(),
            timeout: Duration::from_secs(120),
            requests_per_minute: 60,
        }
    }
}

/// Chat-completion client with temperature fixed at 0.
pub struct LiveClient {
    config: LiveConfig,
    key: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl LiveClient {
    pub fn new(config: LiveConfig) -> Result<Self, ClientError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| ClientError::Fatal(format!("environment variable {} is not set", config.api_key_env)))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = RateLimiter::per_minute(config.requests_per_minute);
        Ok(LiveClient {
            config,
            key,
            agent,
            limiter,
        })
    }
}

impl CompletionClient for LiveClient {
    fn id(&self) -> String {
        format!("live:{}", self.config.model)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        self.limiter.acquire();
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(ClientError::Transient(format!("HTTP {status}: {text}"))),
            _ => return Err(ClientError::Fatal(format!("HTTP {status}: {text}"))),
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| ClientError::Fatal(format!("bad response body: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Fatal("response has no choices[0].message.content".into()))
    }
}

/// Inputs a client factory may need.
#[derive(Debug, Clone, Default)]
pub struct ClientConfig {
    pub script: Option<PathBuf>,
    pub live: LiveConfig,
}

pub trait ClientFactory: Send + Sync {
    fn build(&self, config: &ClientConfig) -> Result<Arc<dyn CompletionClient>, ClientError>;
}

impl<F> ClientFactory for F
where
    F: Fn(&ClientConfig) -> Result<Arc<dyn CompletionClient>, ClientError> + Send + Sync,
{
    fn build(&self, config: &ClientConfig) -> Result<Arc<dyn CompletionClient>, ClientError> {
        self(config)
    }
}

fn scripted(path: &Path) -> Result<Arc<dyn CompletionClient>, ClientError> {
    let c = ScriptedClient::load(path).map_err(|e| ClientError::Fatal(e.to_string()))?;
    Ok(Arc::new(c))
}

/// `mock` runs the script when one is given and echoes otherwise.
pub fn clients() -> StrategyRegistry<dyn ClientFactory> {
    let mut reg: StrategyRegistry<dyn ClientFactory> = StrategyRegistry::new("completion client");
    reg.register(
        "mock",
        Box::new(|c: &ClientConfig| match &c.script {
            Some(p) => scripted(p),
            None => Ok(Arc::new(EchoClient) as Arc<dyn CompletionClient>),
        }),
    );
    reg.register("echo", Box::new(|_: &ClientConfig| Ok(Arc::new(EchoClient) as Arc<dyn CompletionClient>)));
    reg.register("empty", Box::new(|_: &ClientConfig| Ok(Arc::new(EmptyClient) as Arc<dyn CompletionClient>)));
    reg.register(
        "live",
        Box::new(|c: &ClientConfig| Ok(Arc::new(LiveClient::new(c.live.clone())?) as Arc<dyn CompletionClient>)),
    );
    reg
}
