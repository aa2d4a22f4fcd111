//! HTTP client for a remote embedding endpoint. Speaks the common
//! embeddings-API shape: POST {model, input: [texts]} and read back
//! data[].embedding. Retries transient failures with linear backoff.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EmbedderConfig, EmbeddingVector};

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model_id: String,
    max_retries: u32,
    api_key: Option<String>,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbedderConfig) -> Result<Self> {
        let url = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| Error::Validation("remote embedder requires endpoint_url".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(RemoteEmbedder {
            client,
            url,
            model_id: cfg.model_id.clone(),
            max_retries: cfg.max_retries,
            api_key: std::env::var(&cfg.api_key_env).ok(),
        })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let body = EmbeddingRequest {
            model: &self.model_id,
            input: vec![text],
        };
        let mut last_err = None;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 * u64::from(attempt)));
            }
            match self.try_once(&body) {
                Ok(v) => return Ok(v),
                Err(RequestFailure::Retryable(msg)) => last_err = Some(msg),
                Err(RequestFailure::Fatal(e)) => return Err(e),
            }
        }
        Err(Error::Transport(format!(
            "embedding request to {} failed after {} attempts: {}",
            self.url,
            self.max_retries + 1,
            last_err.unwrap_or_default()
        )))
    }

    fn try_once(&self, body: &EmbeddingRequest) -> std::result::Result<EmbeddingVector, RequestFailure> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| RequestFailure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(RequestFailure::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(RequestFailure::Fatal(Error::Transport(format!(
                "embedding endpoint returned {status}: {text}"
            ))));
        }
        let parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| RequestFailure::Fatal(Error::Transport(format!("bad response body: {e}"))))?;
        let datum = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| RequestFailure::Fatal(Error::Transport("response carried no embeddings".into())))?;
        Ok(EmbeddingVector {
            values: datum.embedding,
            model_id: self.model_id.clone(),
        })
    }
}

enum RequestFailure {
    Retryable(String),
    Fatal(Error),
}
