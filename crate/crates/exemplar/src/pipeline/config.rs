//! Run configuration: one TOML file describes a complete experiment.
//!
//! Relative paths are resolved against the config file's directory so a run
//! directory can be moved or checked in wholesale. The top-level seed feeds
//! every stochastic component; the selection section may override it with
//! its own.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::BackboneEndpoint;
use crate::embedding::EmbedderConfig;
use crate::error::{Error, Result};
use crate::prompting::DecodingParams;
use crate::selector::{SelectionConfig, Strategy};

/// Scalar fields first: TOML requires plain values before tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub cache_dir: PathBuf,
    pub bank_path: PathBuf,
    pub queries_path: PathBuf,
    pub demos_path: PathBuf,
    /// Picks the prompt template and tags loaded banks.
    #[serde(default = "default_task_tag")]
    pub task_tag: String,
    /// Skill candidates generated per input (demo-order shuffles).
    #[serde(default = "default_rewrite_candidates")]
    pub rewrite_candidates: usize,
    #[serde(default = "default_embedder")]
    pub embedder: EmbedderConfig,
    pub rewriter_endpoint: BackboneEndpoint,
    pub backbone: BackboneEndpoint,
    pub selection: SelectionConfig,
    #[serde(default)]
    pub decoding: DecodingParams,
}

fn default_task_tag() -> String {
    "default".to_string()
}

fn default_rewrite_candidates() -> usize {
    5
}

fn default_embedder() -> EmbedderConfig {
    EmbedderConfig::local(64)
}

/// Deserialization mirror: selection.seed is optional in the file and falls
/// back to the run seed.
#[derive(Deserialize)]
struct RawRunConfig {
    seed: u64,
    cache_dir: PathBuf,
    bank_path: PathBuf,
    queries_path: PathBuf,
    demos_path: PathBuf,
    #[serde(default = "default_task_tag")]
    task_tag: String,
    #[serde(default = "default_rewrite_candidates")]
    rewrite_candidates: usize,
    #[serde(default = "default_embedder")]
    embedder: EmbedderConfig,
    rewriter_endpoint: BackboneEndpoint,
    backbone: BackboneEndpoint,
    selection: RawSelection,
    #[serde(default)]
    decoding: DecodingParams,
}

#[derive(Deserialize)]
struct RawSelection {
    #[serde(default = "default_k")]
    k: usize,
    strategy: Strategy,
    seed: Option<u64>,
    #[serde(default = "default_trials")]
    trials: usize,
}

fn default_k() -> usize {
    4
}

fn default_trials() -> usize {
    3
}

fn resolve(base: &Path, path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::from_toml_str(&source, base)
            .map_err(|e| match e {
                Error::Parse { line, message, .. } => Error::parse(path, line, message),
                other => other,
            })
    }

    /// Parse config text, resolving relative paths against `base`.
    pub fn from_toml_str(source: &str, base: &Path) -> Result<RunConfig> {
        let raw: RawRunConfig = toml::from_str(source)
            .map_err(|e| Error::parse("<config>", 0, e.to_string()))?;
        let mut rewriter_endpoint = raw.rewriter_endpoint;
        if let Some(p) = rewriter_endpoint.canned_path.take() {
            rewriter_endpoint.canned_path = Some(resolve(base, p));
        }
        let mut backbone = raw.backbone;
        if let Some(p) = backbone.canned_path.take() {
            backbone.canned_path = Some(resolve(base, p));
        }
        Ok(RunConfig {
            cache_dir: resolve(base, raw.cache_dir),
            bank_path: resolve(base, raw.bank_path),
            queries_path: resolve(base, raw.queries_path),
            demos_path: resolve(base, raw.demos_path),
            task_tag: raw.task_tag,
            rewrite_candidates: raw.rewrite_candidates,
            embedder: raw.embedder,
            rewriter_endpoint,
            backbone,
            selection: SelectionConfig {
                k: raw.selection.k,
                strategy: raw.selection.strategy,
                seed: raw.selection.seed.unwrap_or(raw.seed),
                trials: raw.selection.trials,
            },
            decoding: raw.decoding,
            seed: raw.seed,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("config not serializable: {e}")))
    }

    /// Everything checkable before touching data files: referenced paths
    /// exist, component configs are self-consistent.
    pub fn validate(&self) -> Result<()> {
        for (label, path) in [
            ("bank_path", &self.bank_path),
            ("queries_path", &self.queries_path),
            ("demos_path", &self.demos_path),
        ] {
            if !path.exists() {
                return Err(Error::Validation(format!(
                    "{label} does not exist: {}",
                    path.display()
                )));
            }
        }
        for (label, endpoint) in [
            ("rewriter_endpoint", &self.rewriter_endpoint),
            ("backbone", &self.backbone),
        ] {
            endpoint.validate()?;
            if let Some(canned) = &endpoint.canned_path {
                if !canned.exists() {
                    return Err(Error::Validation(format!(
                        "{label} canned_path does not exist: {}",
                        canned.display()
                    )));
                }
            }
        }
        if self.rewrite_candidates == 0 {
            return Err(Error::Validation("rewrite_candidates must be positive".into()));
        }
        self.embedder.validate()?;
        self.decoding.validate()?;
        if self.selection.k == 0 {
            return Err(Error::Validation("k must be positive".into()));
        }
        if self.selection.trials == 0 {
            return Err(Error::Validation("trials must be positive".into()));
        }
        Ok(())
    }
}
