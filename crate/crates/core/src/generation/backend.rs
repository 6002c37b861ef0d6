use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::prompt::ChatMessage;
use crate::error::GenerationError;

/// Identifies one generation call within a run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CallMeta {
    /// Theorem being optimized.
    pub label: String,
    /// Position of this call in the sampler's call budget, independent of
    /// scheduling order.
    pub ordinal: usize,
    /// Per-call seed for backends that accept one.
    pub seed: u64,
    /// Zero for the first try, then one more per retry.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Retryable: rate limit, overload or a transient transport failure.
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("{0}")]
    Failed(String),
}

pub trait GeneratorBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage], meta: &CallMeta) -> Result<String, BackendError>;
    /// Total `complete` invocations so far, retries included.
    fn calls(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackoffConfig {
    pub base_ms: u64,
    pub max_retries: u32,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        BackoffConfig {
            base_ms: 1000,
            max_retries: 6,
        }
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Randomized exponential backoff: the delay before retry `r` (counting from
/// zero) is uniform in `[0, base * 2^r]`.
#[derive(Clone)]
pub struct Backoff {
    pub config: BackoffConfig,
    seed: u64,
    sleeper: Sleeper,
    slept: Arc<Mutex<Vec<Duration>>>,
}

impl std::fmt::Debug for Backoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backoff").field("config", &self.config).field("seed", &self.seed).finish()
    }
}

impl Backoff {
    pub fn new(config: BackoffConfig, seed: u64) -> Self {
        Backoff {
            config,
            seed,
            sleeper: Arc::new(std::thread::sleep),
            slept: Arc::default(),
        }
    }

    /// Replaces the real sleep, e.g. with a no-op in tests.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    /// Delays requested so far, in order.
    pub fn history(&self) -> Vec<Duration> {
        self.slept.lock().expect("backoff history poisoned").clone()
    }

    /// Delay before retry `retry` of the call identified by `meta`.
    /// Deterministic in `(seed, ordinal, label, retry)`.
    pub fn delay(&self, meta: &CallMeta, retry: u32) -> Duration {
        let cap = self.config.base_ms.saturating_mul(1u64 << retry.min(32));
        let mut h = self.seed ^ (meta.ordinal as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ u64::from(retry) << 48;
        for b in meta.label.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x100000001b3);
        }
        let mut rng = StdRng::seed_from_u64(h);
        Duration::from_millis(rng.random_range(0..=cap))
    }

    /// Calls `backend` until it answers, a non-retryable error occurs, or
    /// the retry budget is spent.
    pub fn call(
        &self,
        backend: &dyn GeneratorBackend,
        messages: &[ChatMessage],
        meta: &CallMeta,
    ) -> Result<String, GenerationError> {
        let mut meta = meta.clone();
        let mut attempts = 0;
        loop {
            meta.attempt = attempts as u32;
            attempts += 1;
            match backend.complete(messages, &meta) {
                Ok(text) => return Ok(text),
                Err(BackendError::RateLimited(msg)) if meta.attempt < self.config.max_retries => {
                    let d = self.delay(&meta, meta.attempt);
                    log::debug!("{}: {msg}; retrying in {d:?}", backend.id());
                    self.slept.lock().expect("backoff history poisoned").push(d);
                    (self.sleeper)(d);
                }
                Err(e) => {
                    return Err(GenerationError::BackendExhausted {
                        attempts,
                        last: e.to_string(),
                    })
                }
            }
        }
    }
}

/// One scripted reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Text(String),
    Signal {
        #[serde(default)]
        rate_limit: bool,
        #[serde(default)]
        error: Option<String>,
    },
}

impl ScriptStep {
    pub fn rate_limit() -> Self {
        ScriptStep::Signal {
            rate_limit: true,
            error: None,
        }
    }

    fn reply(&self) -> Result<String, BackendError> {
        match self {
            ScriptStep::Text(t) => Ok(t.clone()),
            ScriptStep::Signal { rate_limit: true, .. } => Err(BackendError::RateLimited("scripted rate limit".into())),
            ScriptStep::Signal { error, .. } => Err(BackendError::Failed(
                error.clone().unwrap_or_else(|| "scripted failure".into()),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptMode {
    /// Reply `i` answers the call with ordinal `i`, whatever order calls
    /// arrive in. Retries of a call get the same reply.
    #[default]
    Ordinal,
    /// Replies are handed out in arrival order; retries consume replies.
    Sequential,
}

/// On-disk form of a script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptFile {
    Steps(Vec<ScriptStep>),
    Full {
        #[serde(default)]
        mode: ScriptMode,
        #[serde(default)]
        cycle: bool,
        /// Scripts per theorem name; `*` applies to any other theorem.
        scripts: BTreeMap<String, Vec<ScriptStep>>,
    },
}

pub const DEFAULT_SCRIPT: &str = "*";

/// Offline generator replaying fixed replies.
pub struct ScriptedGenerator {
    mode: ScriptMode,
    cycle: bool,
    scripts: BTreeMap<String, Vec<ScriptStep>>,
    cursors: Mutex<BTreeMap<String, usize>>,
    calls: AtomicUsize,
}

impl ScriptedGenerator {
    /// Ordinal-mode script used for every theorem.
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        let mut scripts = BTreeMap::new();
        scripts.insert(DEFAULT_SCRIPT.to_string(), steps);
        ScriptedGenerator {
            mode: ScriptMode::Ordinal,
            cycle: false,
            scripts,
            cursors: Mutex::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| ScriptStep::Text(t.into())).collect())
    }

    /// A generator whose every reply is `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        Self::from_texts([text]).cycling(true)
    }

    pub fn cycling(mut self, cycle: bool) -> Self {
        self.cycle = cycle;
        self
    }

    pub fn mode(mut self, mode: ScriptMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_script(mut self, label: &str, steps: Vec<ScriptStep>) -> Self {
        self.scripts.insert(label.to_string(), steps);
        self
    }

    pub fn from_file(file: ScriptFile) -> Self {
        match file {
            ScriptFile::Steps(steps) => Self::new(steps),
            ScriptFile::Full { mode, cycle, scripts } => ScriptedGenerator {
                mode,
                cycle,
                scripts,
                cursors: Mutex::default(),
                calls: AtomicUsize::new(0),
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, GenerationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GenerationError::DecodeError(format!("cannot read script {}: {e}", path.display())))?;
        let file: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| GenerationError::DecodeError(format!("bad script {}: {e}", path.display())))?;
        Ok(Self::from_file(file))
    }

    fn script_for(&self, label: &str) -> Option<(&str, &[ScriptStep])> {
        self.scripts
            .get_key_value(label)
            .or_else(|| self.scripts.get_key_value(DEFAULT_SCRIPT))
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

impl GeneratorBackend for ScriptedGenerator {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _messages: &[ChatMessage], meta: &CallMeta) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let Some((key, steps)) = self.script_for(&meta.label) else {
            return Err(BackendError::Failed(format!("no script for `{}`", meta.label)));
        };
        let index = match self.mode {
            ScriptMode::Ordinal => meta.ordinal,
            ScriptMode::Sequential => {
                let mut cursors = self.cursors.lock().expect("script cursor poisoned");
                let c = cursors.entry(key.to_string()).or_insert(0);
                let i = *c;
                *c += 1;
                i
            }
        };
        let step = match (steps.is_empty(), self.cycle) {
            (true, _) => None,
            (false, true) => steps.get(index % steps.len()),
            (false, false) => steps.get(index),
        };
        match step {
            Some(s) => s.reply(),
            None => Err(BackendError::Failed("script exhausted".into())),
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Settings for an OpenAI-compatible chat completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "PROOFOPT_API_KEY".into()
}

fn default_timeout_secs() -> u64 {
    120
}

impl Default for RemoteChatConfig {
    fn default() -> Self {
        RemoteChatConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: default_key_env(),
            temperature: None,
            timeout_secs: default_timeout_secs(),
        }
    }
}

pub struct RemoteChatBackend {
    config: RemoteChatConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    calls: AtomicUsize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessageBody,
}

#[derive(Deserialize)]
struct ChatMessageBody {
    #[serde(default)]
    content: Option<String>,
}

impl RemoteChatBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: RemoteChatConfig) -> Result<Self, GenerationError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| GenerationError::BackendExhausted {
            attempts: 0,
            last: format!("{} is not set", config.api_key_env),
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GenerationError::BackendExhausted {
                attempts: 0,
                last: e.to_string(),
            })?;
        Ok(RemoteChatBackend {
            config,
            api_key,
            client,
            calls: AtomicUsize::new(0),
        })
    }
}

impl GeneratorBackend for RemoteChatBackend {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, messages: &[ChatMessage], meta: &CallMeta) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "seed": meta.seed,
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() {
                    BackendError::RateLimited(e.to_string())
                } else {
                    BackendError::Failed(e.to_string())
                }
            })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::RateLimited(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Failed(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| BackendError::Failed(format!("bad chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Failed("chat response has no content".into()))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(ordinal: usize) -> CallMeta {
        CallMeta {
            ordinal,
            ..Default::default()
        }
    }

    #[test]
    fn ordinal_replay() {
        let g = ScriptedGenerator::from_texts(["a", "b"]);
        assert_eq!(g.complete(&[], &meta(1)).unwrap(), "b");
        assert_eq!(g.complete(&[], &meta(0)).unwrap(), "a");
        assert!(g.complete(&[], &meta(2)).is_err());
        assert_eq!(g.calls(), 3);
        let g = ScriptedGenerator::from_texts(["a", "b"]).cycling(true);
        assert_eq!(g.complete(&[], &meta(3)).unwrap(), "b");
    }

    #[test]
    fn rate_limit_then_success() {
        let g = ScriptedGenerator::new(vec![ScriptStep::rate_limit(), ScriptStep::rate_limit(), ScriptStep::Text("ok".into())])
            .mode(ScriptMode::Sequential);
        let b = Backoff::new(BackoffConfig::default(), 7).with_sleeper(|_| {});
        assert_eq!(b.call(&g, &[], &meta(0)).unwrap(), "ok");
        assert_eq!(g.calls(), 3);
        let h = b.history();
        assert_eq!(h.len(), 2);
        assert!(h[0] <= Duration::from_millis(1000));
        assert!(h[1] <= Duration::from_millis(2000));
    }

    #[test]
    fn retries_are_capped() {
        let g = ScriptedGenerator::new(vec![ScriptStep::rate_limit()]).cycling(true);
        let b = Backoff::new(BackoffConfig { base_ms: 1, max_retries: 6 }, 0).with_sleeper(|_| {});
        let err = b.call(&g, &[], &meta(0)).unwrap_err();
        assert!(matches!(err, GenerationError::BackendExhausted { attempts: 7, .. }));
        assert_eq!(g.calls(), 7);
    }

    #[test]
    fn hard_failure_is_not_retried() {
        let g = ScriptedGenerator::new(vec![ScriptStep::Signal {
            rate_limit: false,
            error: Some("bad request".into()),
        }]);
        let b = Backoff::new(BackoffConfig::default(), 0).with_sleeper(|_| {});
        assert!(matches!(b.call(&g, &[], &meta(0)), Err(GenerationError::BackendExhausted { attempts: 1, .. })));
    }

    #[test]
    fn delays_are_bounded_and_deterministic() {
        let b = Backoff::new(BackoffConfig { base_ms: 10, max_retries: 6 }, 42);
        for r in 0..6 {
            let d = b.delay(&meta(3), r);
            assert!(d <= Duration::from_millis(10 << r));
            assert_eq!(d, b.delay(&meta(3), r));
        }
    }

    #[test]
    fn script_file_forms() {
        let f: ScriptFile = serde_json::from_str(r#"["a", {"rate_limit": true}]"#).unwrap();
        assert!(matches!(f, ScriptFile::Steps(ref s) if s.len() == 2));
        let f: ScriptFile =
            serde_json::from_str(r#"{"mode": "sequential", "cycle": true, "scripts": {"t": ["x"]}}"#).unwrap();
        let g = ScriptedGenerator::from_file(f);
        let m = CallMeta {
            label: "t".into(),
            ..Default::default()
        };
        assert_eq!(g.complete(&[], &m).unwrap(), "x");
        assert_eq!(g.complete(&[], &m).unwrap(), "x");
        assert!(g.complete(&[], &meta(0)).is_err());
    }
}
