//! Text-completion backends. The engine only ever talks to the
//! [`CompletionBackend`] trait; production wires in the HTTP client,
//! tests and offline runs wire in [`MockCompletion`].

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::prompting::DecodingParams;

pub trait CompletionBackend: Send + Sync {
    /// Complete `prompt`, returning `params.n_samples` completions.
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<Vec<String>>;

    fn model_id(&self) -> &str;
}

/// Canned completions for tests and offline pipelines. Lookup order: exact
/// prompt match, then the needle entry whose needle occurs latest in the
/// prompt (the match closest to the prompt's tail wins), then the default.
pub struct MockCompletion {
    model_id: String,
    exact: BTreeMap<String, String>,
    needles: Vec<(String, String)>,
    default: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CannedEntry {
    /// Substring to look for in the prompt; null means exact-prompt entry.
    needle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
    completion: String,
}

impl MockCompletion {
    pub fn new(model_id: impl Into<String>) -> Self {
        MockCompletion {
            model_id: model_id.into(),
            exact: BTreeMap::new(),
            needles: Vec::new(),
            default: None,
        }
    }

    pub fn with_exact(mut self, prompt: impl Into<String>, completion: impl Into<String>) -> Self {
        self.exact.insert(prompt.into(), completion.into());
        self
    }

    /// Respond with `completion` whenever the prompt contains `needle`.
    pub fn with_needle(mut self, needle: impl Into<String>, completion: impl Into<String>) -> Self {
        self.needles.push((needle.into(), completion.into()));
        self
    }

    pub fn with_default(mut self, completion: impl Into<String>) -> Self {
        self.default = Some(completion.into());
        self
    }

    /// Load canned entries from a JSONL file of {needle, prompt?, completion}.
    pub fn from_canned_file(model_id: impl Into<String>, path: &Path) -> Result<Self> {
        let entries: Vec<CannedEntry> = jsonl::read_records(path)?;
        let mut mock = MockCompletion::new(model_id);
        for entry in entries {
            match (entry.needle, entry.prompt) {
                (Some(needle), _) => mock.needles.push((needle, entry.completion)),
                (None, Some(prompt)) => {
                    mock.exact.insert(prompt, entry.completion);
                }
                (None, None) => mock.default = Some(entry.completion),
            }
        }
        Ok(mock)
    }

    fn lookup(&self, prompt: &str) -> Option<&str> {
        if let Some(hit) = self.exact.get(prompt) {
            return Some(hit);
        }
        // pick the needle that matches deepest into the prompt, so entries
        // keyed on the query block beat entries keyed on shared preamble
        let mut best: Option<(usize, &str)> = None;
        for (needle, completion) in &self.needles {
            if let Some(offset) = prompt.rfind(needle.as_str()) {
                if best.is_none_or(|(b, _)| offset > b) {
                    best = Some((offset, completion));
                }
            }
        }
        best.map(|(_, c)| c).or(self.default.as_deref())
    }
}

impl CompletionBackend for MockCompletion {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<Vec<String>> {
        let completion = self.lookup(prompt).ok_or_else(|| {
            let tail: String = prompt.chars().rev().take(120).collect::<Vec<_>>().iter().rev().collect();
            Error::Transport(format!("no canned completion for prompt ending {tail:?}"))
        })?;
        Ok(vec![completion.to_string(); params.n_samples.max(1)])
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// HTTP completion backend. POSTs {model, prompt, temperature, max_tokens, n}
/// and accepts either completions-style choices[].text or chat-style
/// choices[].message.content.
pub struct HttpCompletionBackend {
    client: reqwest::blocking::Client,
    url: String,
    model_id: String,
    max_retries: u32,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: usize,
    n: usize,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    message: Option<ChatMessage>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpCompletionBackend {
    pub fn new(
        url: impl Into<String>,
        model_id: impl Into<String>,
        timeout_secs: u64,
        max_retries: u32,
        api_key_env: &str,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpCompletionBackend {
            client,
            url: url.into(),
            model_id: model_id.into(),
            max_retries,
            api_key: std::env::var(api_key_env).ok(),
        })
    }

    fn try_once(&self, body: &CompletionRequest) -> std::result::Result<Vec<String>, OnceFailure> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| OnceFailure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(OnceFailure::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            // a 400 complaining about context length means the prompt is too
            // long for the model, which is a budgeting bug, not a transport one
            if status.as_u16() == 400 && text.to_lowercase().contains("context") {
                return Err(OnceFailure::Fatal(Error::BudgetExceeded(format!(
                    "backend rejected prompt as too long: {text}"
                ))));
            }
            return Err(OnceFailure::Fatal(Error::Transport(format!(
                "completion endpoint returned {status}: {text}"
            ))));
        }
        let parsed: CompletionResponse = resp
            .json()
            .map_err(|e| OnceFailure::Fatal(Error::Transport(format!("bad response body: {e}"))))?;
        let mut completions = Vec::with_capacity(parsed.choices.len());
        for choice in parsed.choices {
            let text = choice
                .text
                .or(choice.message.map(|m| m.content))
                .ok_or_else(|| {
                    OnceFailure::Fatal(Error::Transport("choice carried neither text nor message".into()))
                })?;
            completions.push(text);
        }
        if completions.is_empty() {
            return Err(OnceFailure::Fatal(Error::Transport(
                "response carried no choices".into(),
            )));
        }
        Ok(completions)
    }
}

enum OnceFailure {
    Retryable(String),
    Fatal(Error),
}

/// Append-only completion cache, one JSONL file per directory. Keys hash the
/// prompt together with everything that changes the answer: model id,
/// temperature bits, sample count.
pub struct CompletionCache {
    path: PathBuf,
    inner: Mutex<HashMap<String, Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
struct CompletionLine {
    key: String,
    completions: Vec<String>,
}

const COMPLETION_CACHE_FILE: &str = "completions.jsonl";

fn completion_key(model_id: &str, temperature: f64, n_samples: usize, prompt: &str) -> String {
    sha256_hex(&[
        model_id.as_bytes(),
        &[0u8],
        &temperature.to_bits().to_le_bytes(),
        &(n_samples as u64).to_le_bytes(),
        prompt.as_bytes(),
    ])
}

impl CompletionCache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(COMPLETION_CACHE_FILE);
        let mut map = HashMap::new();
        if path.exists() {
            let lines: Vec<CompletionLine> = jsonl::read_records(&path)?;
            for line in lines {
                map.insert(line.key, line.completions);
            }
        }
        Ok(CompletionCache {
            path,
            inner: Mutex::new(map),
        })
    }

    fn get(&self, key: &str) -> Option<Vec<String>> {
        self.inner.lock().unwrap().get(key).cloned()
    }

    fn put(&self, key: String, completions: &[String]) -> Result<()> {
        let mut map = self.inner.lock().unwrap();
        if map.contains_key(&key) {
            return Ok(());
        }
        let line = CompletionLine {
            key: key.clone(),
            completions: completions.to_vec(),
        };
        let mut serialized =
            serde_json::to_string(&line).map_err(|e| Error::Validation(e.to_string()))?;
        serialized.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(serialized.as_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        map.insert(key, completions.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Wraps any backend with a [`CompletionCache`], so identical (prompt,
/// model, temperature) never hits the inner backend twice. Meant for greedy
/// decoding; a cached stochastic sample would freeze its randomness.
pub struct CachedBackend<'a> {
    inner: &'a dyn CompletionBackend,
    cache: &'a CompletionCache,
}

impl<'a> CachedBackend<'a> {
    pub fn new(inner: &'a dyn CompletionBackend, cache: &'a CompletionCache) -> Self {
        CachedBackend { inner, cache }
    }
}

impl CompletionBackend for CachedBackend<'_> {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<Vec<String>> {
        let key = completion_key(
            self.inner.model_id(),
            params.temperature,
            params.n_samples,
            prompt,
        );
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let completions = self.inner.complete(prompt, params)?;
        self.cache.put(key, &completions)?;
        Ok(completions)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

/// Where completions come from: a remote HTTP endpoint or a canned mock.
/// Configuration, not code, so pipelines can swap backbones per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackboneEndpoint {
    pub kind: BackboneKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub model_id: String,
    /// JSONL of canned {needle, completion} entries for the mock kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canned_path: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Remote,
    Mock,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

fn default_api_key_env() -> String {
    "COMPLETION_API_KEY".to_string()
}

impl BackboneEndpoint {
    pub fn validate(&self) -> Result<()> {
        if self.kind == BackboneKind::Remote && self.url.is_none() {
            return Err(Error::Validation("remote backbone requires url".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn CompletionBackend>> {
        self.validate()?;
        match self.kind {
            BackboneKind::Remote => Ok(Box::new(HttpCompletionBackend::new(
                self.url.clone().expect("validated above"),
                self.model_id.clone(),
                self.timeout_secs,
                self.max_retries,
                &self.api_key_env,
            )?)),
            BackboneKind::Mock => match &self.canned_path {
                Some(path) => Ok(Box::new(MockCompletion::from_canned_file(
                    self.model_id.clone(),
                    path,
                )?)),
                None => Ok(Box::new(MockCompletion::new(self.model_id.clone()))),
            },
        }
    }
}

impl CompletionBackend for HttpCompletionBackend {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<Vec<String>> {
        let body = CompletionRequest {
            model: &self.model_id,
            prompt,
            temperature: params.temperature,
            max_tokens: params.max_decode_tokens,
            n: params.n_samples.max(1),
        };
        let mut last_err = None;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 * u64::from(attempt)));
            }
            match self.try_once(&body) {
                Ok(texts) => return Ok(texts),
                Err(OnceFailure::Retryable(msg)) => last_err = Some(msg),
                Err(OnceFailure::Fatal(e)) => return Err(e),
            }
        }
        Err(Error::Transport(format!(
            "completion request to {} failed after {} attempts: {}",
            self.url,
            self.max_retries + 1,
            last_err.unwrap_or_default()
        )))
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}
