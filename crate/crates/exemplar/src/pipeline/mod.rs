//! Content-addressed experiment pipeline with resumable stages.
//!
//! Each stage writes its rows to `cache_dir/stages/<stage>-<key>.jsonl`,
//! where the key hashes the stage's own parameters, the digests of the data
//! files it reads, and the keys of upstream stages. A stage whose output
//! file already exists is reused without recomputation, so re-running an
//! unchanged config touches no backend, and changing any input (or any
//! upstream parameter) re-keys every stage downstream of it. All keys are
//! computable from the config and data files alone, which is what makes
//! `plan` possible without executing anything.
//!
//! Final outputs land at stable names under `cache_dir`: `predictions.jsonl`,
//! `records.jsonl`, and `report.json`. These contain no timestamps, so a
//! deterministic backend reproduces them byte for byte.

pub mod config;

pub use config::RunConfig;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backend::{CachedBackend, CompletionCache};
use crate::digest::sha256_hex;
use crate::bank::{embedding_text_of, load_bank, Example, QueryInput};
use crate::embedding::{fnv1a_64, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_records, EvalReport, PredictionRecord};
use crate::jsonl;
use crate::prompting::{assemble_prompt, complete, DecodingParams};
use crate::rewriter::{generate_candidate_set, load_demonstrations, SkillCandidateSet};
use crate::selector::{
    select_knn, select_oracle_sketch, select_oracle_target_knn, select_random, select_skill_knn,
    SelectionResult, Strategy,
};

/// How far to take the pipeline. Gates are ordered; each includes all
/// earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageGate {
    Rewrite,
    Embed,
    Select,
    Run,
    Eval,
}

/// One stage as planned or executed. `cached` reports whether the output
/// already existed before this invocation.
#[derive(Debug, Clone)]
pub struct StagePlan {
    pub stage: String,
    pub output: PathBuf,
    pub cached: bool,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub stages: Vec<StagePlan>,
    pub report: Option<EvalReport>,
    pub predictions_path: Option<PathBuf>,
    pub records_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
}

/// Embeddings for one bank example or query: a single question or target
/// vector, or one vector per skill candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSet {
    pub id: String,
    pub vectors: Vec<EmbeddingVector>,
}

#[derive(Clone, Copy, PartialEq)]
enum EmbedSource {
    Skills,
    Questions,
    Targets,
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&[&bytes]))
}

/// First 16 hex chars of the hash over the stage's identity parts.
fn stage_key(parts: &[String]) -> String {
    let joined = parts.join("\n");
    sha256_hex(&[joined.as_bytes()])[..16].to_string()
}

fn json_fingerprint<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("fingerprinted configs serialize")
}

/// Stable per-input seed so each input draws its own permutation sequence.
fn per_input_seed(run_seed: u64, id: &str) -> u64 {
    run_seed ^ fnv1a_64(id)
}

struct StageId {
    gate: StageGate,
    name: &'static str,
    output: PathBuf,
}

/// All stage identities for a config, computed up front from parameter and
/// input-file digests.
struct Layout {
    embed_source: Option<EmbedSource>,
    rewrite_bank: Option<PathBuf>,
    rewrite_queries: Option<PathBuf>,
    embed_bank: Option<PathBuf>,
    embed_queries: Option<PathBuf>,
    select: PathBuf,
    run: PathBuf,
    stages: Vec<StageId>,
}

impl Layout {
    fn compute(config: &RunConfig) -> Result<Layout> {
        let stages_dir = config.cache_dir.join("stages");
        let d_bank = file_digest(&config.bank_path)?;
        let d_queries = file_digest(&config.queries_path)?;

        let strategy = config.selection.strategy;
        let embed_source = match strategy {
            Strategy::SkillBase | Strategy::SkillConsistency | Strategy::SkillDistinctiveness => {
                Some(EmbedSource::Skills)
            }
            Strategy::KnnRaw => Some(EmbedSource::Questions),
            Strategy::OracleTargetKnn => Some(EmbedSource::Targets),
            Strategy::Random | Strategy::OracleSketch => None,
        };

        let mut stages = Vec::new();
        let mut path_of = |gate: StageGate, name: &'static str, key: String| {
            let output = stages_dir.join(format!("{name}-{key}.jsonl"));
            stages.push(StageId {
                gate,
                name,
                output: output.clone(),
            });
            output
        };

        let mut rewrite_bank_key = None;
        let mut rewrite_bank = None;
        let mut rewrite_queries_key = None;
        let mut rewrite_queries = None;
        if embed_source == Some(EmbedSource::Skills) {
            let d_demos = file_digest(&config.demos_path)?;
            let rewrite_decoding = DecodingParams {
                temperature: 0.0,
                n_samples: 1,
                ..config.decoding.clone()
            };
            let fp = [
                config.rewriter_endpoint.model_id.clone(),
                config.rewrite_candidates.to_string(),
                config.seed.to_string(),
                json_fingerprint(&rewrite_decoding),
                d_demos,
            ];
            let mut bank_parts = vec!["rewrite-bank".to_string()];
            bank_parts.extend(fp.iter().cloned());
            bank_parts.push(d_bank.clone());
            let bank_key = stage_key(&bank_parts);
            let mut query_parts = vec!["rewrite-queries".to_string()];
            query_parts.extend(fp.iter().cloned());
            query_parts.push(d_queries.clone());
            let query_key = stage_key(&query_parts);
            rewrite_bank = Some(path_of(StageGate::Rewrite, "rewrite-bank", bank_key.clone()));
            rewrite_queries = Some(path_of(
                StageGate::Rewrite,
                "rewrite-queries",
                query_key.clone(),
            ));
            rewrite_bank_key = Some(bank_key);
            rewrite_queries_key = Some(query_key);
        }

        let mut embed_bank_key = None;
        let mut embed_bank = None;
        let mut embed_queries_key = None;
        let mut embed_queries = None;
        if let Some(source) = embed_source {
            let embedder_fp = json_fingerprint(&config.embedder);
            let (label, bank_input, query_input) = match source {
                EmbedSource::Skills => (
                    "skills",
                    rewrite_bank_key.clone().expect("skills imply rewrite"),
                    rewrite_queries_key.clone().expect("skills imply rewrite"),
                ),
                EmbedSource::Questions => ("questions", d_bank.clone(), d_queries.clone()),
                EmbedSource::Targets => ("targets", d_bank.clone(), d_queries.clone()),
            };
            let bank_key = stage_key(&[
                "embed-bank".to_string(),
                embedder_fp.clone(),
                label.to_string(),
                bank_input,
            ]);
            let query_key = stage_key(&[
                "embed-queries".to_string(),
                embedder_fp,
                label.to_string(),
                query_input,
            ]);
            embed_bank = Some(path_of(StageGate::Embed, "embed-bank", bank_key.clone()));
            embed_queries = Some(path_of(StageGate::Embed, "embed-queries", query_key.clone()));
            embed_bank_key = Some(bank_key);
            embed_queries_key = Some(query_key);
        }

        let mut select_parts = vec![
            "select".to_string(),
            strategy.name().to_string(),
            config.selection.k.to_string(),
            config.selection.seed.to_string(),
            config.selection.trials.to_string(),
        ];
        match embed_source {
            Some(_) => {
                select_parts.push(embed_bank_key.expect("embed keys set above"));
                select_parts.push(embed_queries_key.expect("embed keys set above"));
            }
            None => {
                select_parts.push(d_bank.clone());
                select_parts.push(d_queries.clone());
            }
        }
        let select_key = stage_key(&select_parts);
        let select = path_of(StageGate::Select, "select", select_key.clone());

        let run_key = stage_key(&[
            "run".to_string(),
            config.backbone.model_id.clone(),
            json_fingerprint(&config.decoding),
            config.task_tag.clone(),
            d_bank,
            d_queries,
            select_key,
        ]);
        let run = path_of(StageGate::Run, "run", run_key);

        Ok(Layout {
            embed_source,
            rewrite_bank,
            rewrite_queries,
            embed_bank,
            embed_queries,
            select,
            run,
            stages,
        })
    }

    fn plans(&self, gate: StageGate) -> Vec<StagePlan> {
        self.stages
            .iter()
            .filter(|s| s.gate <= gate)
            .map(|s| StagePlan {
                stage: s.name.to_string(),
                output: s.output.clone(),
                cached: s.output.exists(),
            })
            .collect()
    }
}

/// Validate the config and report each stage's output path and cache state
/// without executing anything.
pub fn plan(config: &RunConfig, gate: StageGate) -> Result<Vec<StagePlan>> {
    config.validate()?;
    Ok(Layout::compute(config)?.plans(gate))
}

fn write_atomic<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    jsonl::write_records(&tmp, rows)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load the stage's rows if its output exists, otherwise compute and persist
/// them. Errors are tagged with the stage name.
fn materialize<T, F>(
    stages: &mut Vec<StagePlan>,
    stage: &str,
    path: &Path,
    compute: F,
) -> Result<Vec<T>>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<Vec<T>>,
{
    let cached = path.exists();
    let rows = if cached {
        jsonl::read_records(path).map_err(|e| e.in_stage(stage))?
    } else {
        let rows = compute().map_err(|e| e.in_stage(stage))?;
        write_atomic(path, &rows).map_err(|e| e.in_stage(stage))?;
        rows
    };
    stages.push(StagePlan {
        stage: stage.to_string(),
        output: path.to_path_buf(),
        cached,
    });
    Ok(rows)
}

/// Execute the pipeline through `gate`. See the module docs for stage
/// addressing and reuse semantics.
pub fn run_to(config: &RunConfig, gate: StageGate) -> Result<PipelineOutcome> {
    config.validate()?;
    let layout = Layout::compute(config)?;
    fs::create_dir_all(config.cache_dir.join("stages"))
        .map_err(|e| Error::io(config.cache_dir.join("stages"), e))?;

    let bank = load_bank(&config.bank_path, &config.task_tag).map_err(|e| e.in_stage("load"))?;
    let queries: Vec<Example> =
        jsonl::read_records(&config.queries_path).map_err(|e| e.in_stage("load"))?;
    if queries.is_empty() {
        return Err(Error::Validation("queries file is empty".into()).in_stage("load"));
    }
    config
        .selection
        .validate(bank.len())
        .map_err(|e| e.in_stage("select"))?;

    let mut outcome = PipelineOutcome {
        stages: Vec::new(),
        report: None,
        predictions_path: None,
        records_path: None,
        report_path: None,
    };

    let completion_cache = CompletionCache::open(&config.cache_dir)?;

    let mut bank_skills: Option<Vec<SkillCandidateSet>> = None;
    let mut query_skills: Option<Vec<SkillCandidateSet>> = None;
    if let (Some(bank_path), Some(query_path)) = (&layout.rewrite_bank, &layout.rewrite_queries) {
        let demos = load_demonstrations(&config.demos_path, &config.task_tag)
            .map_err(|e| e.in_stage("rewrite-bank"))?;
        let endpoint = config
            .rewriter_endpoint
            .build()
            .map_err(|e| e.in_stage("rewrite-bank"))?;
        let rewriter = CachedBackend::new(endpoint.as_ref(), &completion_cache);
        let rewrite_decoding = DecodingParams {
            temperature: 0.0,
            n_samples: 1,
            ..config.decoding.clone()
        };
        bank_skills = Some(materialize(
            &mut outcome.stages,
            "rewrite-bank",
            bank_path,
            || {
                bank.examples()
                    .iter()
                    .map(|ex| {
                        generate_candidate_set(
                            ex,
                            &demos,
                            config.rewrite_candidates,
                            per_input_seed(config.seed, &ex.id),
                            &rewriter,
                            &rewrite_decoding,
                        )
                    })
                    .collect()
            },
        )?);
        query_skills = Some(materialize(
            &mut outcome.stages,
            "rewrite-queries",
            query_path,
            || {
                queries
                    .iter()
                    .map(|q| {
                        generate_candidate_set(
                            q,
                            &demos,
                            config.rewrite_candidates,
                            per_input_seed(config.seed, &q.id),
                            &rewriter,
                            &rewrite_decoding,
                        )
                    })
                    .collect()
            },
        )?);
    }
    if gate == StageGate::Rewrite {
        return Ok(outcome);
    }

    let mut bank_embeds: Option<Vec<EmbeddedSet>> = None;
    let mut query_embeds: Option<Vec<EmbeddedSet>> = None;
    if let (Some(source), Some(bank_path), Some(query_path)) =
        (layout.embed_source, &layout.embed_bank, &layout.embed_queries)
    {
        let embedder =
            Embedder::new(config.embedder.clone())?.with_cache_dir(&config.cache_dir)?;
        let embed_examples = |items: &[Example]| -> Result<Vec<EmbeddedSet>> {
            items
                .iter()
                .map(|ex| {
                    let text = match source {
                        EmbedSource::Questions => embedding_text_of(ex),
                        EmbedSource::Targets => ex.target.clone(),
                        EmbedSource::Skills => unreachable!("skills embed candidate sets"),
                    };
                    Ok(EmbeddedSet {
                        id: ex.id.clone(),
                        vectors: vec![embedder.embed_text(&text)?],
                    })
                })
                .collect()
        };
        let embed_skills = |sets: &[SkillCandidateSet]| -> Result<Vec<EmbeddedSet>> {
            sets.iter()
                .map(|set| {
                    let texts: Vec<String> = set.skills().map(str::to_string).collect();
                    Ok(EmbeddedSet {
                        id: set.input_id.clone(),
                        vectors: embedder.embed_batch(&texts)?,
                    })
                })
                .collect()
        };
        bank_embeds = Some(materialize(&mut outcome.stages, "embed-bank", bank_path, || {
            match source {
                EmbedSource::Skills => embed_skills(bank_skills.as_ref().expect("rewrite ran")),
                _ => embed_examples(bank.examples()),
            }
        })?);
        query_embeds = Some(materialize(
            &mut outcome.stages,
            "embed-queries",
            query_path,
            || match source {
                EmbedSource::Skills => embed_skills(query_skills.as_ref().expect("rewrite ran")),
                _ => embed_examples(&queries),
            },
        )?);
    }
    if gate == StageGate::Embed {
        return Ok(outcome);
    }

    let selections: Vec<SelectionResult> =
        materialize(&mut outcome.stages, "select", &layout.select, || {
            let strategy = config.selection.strategy;
            let k = config.selection.k;
            match strategy {
                Strategy::Random => {
                    let mut all = Vec::with_capacity(queries.len() * config.selection.trials);
                    for q in &queries {
                        let mut cfg = config.selection.clone();
                        cfg.seed = per_input_seed(config.selection.seed, &q.id);
                        all.extend(select_random(&bank, &cfg, &q.id)?);
                    }
                    Ok(all)
                }
                Strategy::OracleSketch => queries
                    .iter()
                    .map(|q| select_oracle_sketch(&q.id, &q.target, &bank, k))
                    .collect(),
                Strategy::KnnRaw | Strategy::OracleTargetKnn => {
                    let bank_vecs: Vec<(String, EmbeddingVector)> = bank_embeds
                        .as_ref()
                        .expect("embed ran")
                        .iter()
                        .map(|set| (set.id.clone(), set.vectors[0].clone()))
                        .collect();
                    query_embeds
                        .as_ref()
                        .expect("embed ran")
                        .iter()
                        .map(|set| {
                            if strategy == Strategy::KnnRaw {
                                select_knn(&set.id, &set.vectors[0], &bank_vecs, k)
                            } else {
                                select_oracle_target_knn(&set.id, &set.vectors[0], &bank_vecs, k)
                            }
                        })
                        .collect()
                }
                _ => {
                    let variant = strategy.skill_variant().expect("remaining are skill");
                    let bank_sets: Vec<(String, Vec<EmbeddingVector>)> = bank_embeds
                        .as_ref()
                        .expect("embed ran")
                        .iter()
                        .map(|set| (set.id.clone(), set.vectors.clone()))
                        .collect();
                    query_embeds
                        .as_ref()
                        .expect("embed ran")
                        .iter()
                        .map(|set| select_skill_knn(&set.id, &set.vectors, &bank_sets, variant, k))
                        .collect()
                }
            }
        })?;
    if gate == StageGate::Select {
        return Ok(outcome);
    }

    let backbone_endpoint = config.backbone.build().map_err(|e| e.in_stage("run"))?;
    let backbone = CachedBackend::new(backbone_endpoint.as_ref(), &completion_cache);
    let query_by_id: std::collections::HashMap<&str, &Example> =
        queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let predictions: Vec<PredictionRecord> =
        materialize(&mut outcome.stages, "run", &layout.run, || {
            selections
                .iter()
                .map(|sel| {
                    let q = query_by_id.get(sel.query_id.as_str()).ok_or_else(|| {
                        Error::Join {
                            id: sel.query_id.clone(),
                            input: "queries".into(),
                        }
                    })?;
                    let query = QueryInput {
                        id: q.id.clone(),
                        question: q.question.clone(),
                        schema: q.schema.clone(),
                    };
                    let spec = assemble_prompt(sel, &bank, &query, &config.decoding)?;
                    let outputs = complete(&spec, &backbone, &config.decoding)?;
                    Ok(PredictionRecord {
                        query_id: sel.query_id.clone(),
                        trial: sel.trial,
                        prediction: outputs.into_iter().next().expect("n_samples >= 1"),
                    })
                })
                .collect()
        })?;
    let predictions_path = config.cache_dir.join("predictions.jsonl");
    write_atomic(&predictions_path, &predictions).map_err(|e| e.in_stage("run"))?;
    outcome.predictions_path = Some(predictions_path);
    if gate == StageGate::Run {
        return Ok(outcome);
    }

    let (records, report) = evaluate_records(&predictions, &queries, &selections, &bank)
        .map_err(|e| e.in_stage("eval"))?;
    let records_path = config.cache_dir.join("records.jsonl");
    write_atomic(&records_path, &records).map_err(|e| e.in_stage("eval"))?;
    let report_path = config.cache_dir.join("report.json");
    let mut report_json =
        serde_json::to_string_pretty(&report).expect("report serializes");
    report_json.push('\n');
    let tmp = report_path.with_extension("json.tmp");
    fs::write(&tmp, report_json).map_err(|e| Error::io(&tmp, e).in_stage("eval"))?;
    fs::rename(&tmp, &report_path).map_err(|e| Error::io(&report_path, e).in_stage("eval"))?;
    outcome.records_path = Some(records_path);
    outcome.report_path = Some(report_path);
    outcome.report = Some(report);
    Ok(outcome)
}

/// The whole thing: rewrite, embed, select, run, evaluate.
pub fn run(config: &RunConfig) -> Result<PipelineOutcome> {
    run_to(config, StageGate::Eval)
}
