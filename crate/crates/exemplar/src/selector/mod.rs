//! Example selection. Every strategy produces the same shape of answer: the
//! k best bank examples for a query, scored, ranked, and ordered for the
//! prompt so the strongest match sits last (closest to the query block).
//!
//! Scores come from cosine similarity over raw-question embeddings, skill
//! embeddings (single candidate, candidate-set means, or best cross-pair),
//! target embeddings, or keyword-sketch overlap. Ties always break toward
//! the lower bank index, which makes every ranking exactly reproducible.

mod sketch;

pub use sketch::{sketch_keywords, sketch_similarity};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::ExampleBank;
use crate::embedding::{cosine_similarity, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    KnnRaw,
    SkillBase,
    SkillConsistency,
    SkillDistinctiveness,
    OracleTargetKnn,
    OracleSketch,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Random,
        Strategy::KnnRaw,
        Strategy::SkillBase,
        Strategy::SkillConsistency,
        Strategy::SkillDistinctiveness,
        Strategy::OracleTargetKnn,
        Strategy::OracleSketch,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::KnnRaw => "knn_raw",
            Strategy::SkillBase => "skill_base",
            Strategy::SkillConsistency => "skill_consistency",
            Strategy::SkillDistinctiveness => "skill_distinctiveness",
            Strategy::OracleTargetKnn => "oracle_target_knn",
            Strategy::OracleSketch => "oracle_sketch",
        }
    }

    /// Strategies that score by skill candidate sets.
    pub fn skill_variant(&self) -> Option<SkillVariant> {
        match self {
            Strategy::SkillBase => Some(SkillVariant::Base),
            Strategy::SkillConsistency => Some(SkillVariant::Consistency),
            Strategy::SkillDistinctiveness => Some(SkillVariant::Distinctiveness),
            _ => None,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Strategy::ALL.iter().map(|v| v.name()).collect();
                Error::Validation(format!("unknown strategy {s:?}, expected one of {names:?}"))
            })
    }
}

/// How a skill-space ranking turns a candidate set into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillVariant {
    /// Compare only the first (annotated-order) candidates.
    Base,
    /// Compare arithmetic means of each candidate set.
    Consistency,
    /// Compare the best pair across the two candidate sets.
    Distinctiveness,
}

impl SkillVariant {
    pub fn strategy(&self) -> Strategy {
        match self {
            SkillVariant::Base => Strategy::SkillBase,
            SkillVariant::Consistency => Strategy::SkillConsistency,
            SkillVariant::Distinctiveness => Strategy::SkillDistinctiveness,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_k() -> usize {
    4
}

fn default_trials() -> usize {
    3
}

impl SelectionConfig {
    pub fn validate(&self, bank_size: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Validation("k must be positive".into()));
        }
        if self.k > bank_size {
            return Err(Error::Validation(format!(
                "k = {} exceeds bank size {bank_size}",
                self.k
            )));
        }
        if self.trials == 0 {
            return Err(Error::Validation("trials must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub example_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub query_id: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    /// Descending score, ties by ascending bank index.
    pub ranked: Vec<ScoredExample>,
    /// Rendering order: ascending score, so the best example lands directly
    /// before the query block.
    pub prompt_order: Vec<String>,
}

/// Sort scored candidates and keep the top k. `scored` carries the bank
/// index purely for tie-breaking.
fn rank_top_k(
    query_id: &str,
    strategy: Strategy,
    trial: Option<usize>,
    mut scored: Vec<(usize, String, f64)>,
    k: usize,
) -> Result<SelectionResult> {
    if k > scored.len() {
        return Err(Error::Validation(format!(
            "k = {k} exceeds candidate count {}",
            scored.len()
        )));
    }
    for (_, id, score) in &scored {
        if !score.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite score {score} for example {id:?}"
            )));
        }
    }
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    let ranked: Vec<ScoredExample> = scored
        .into_iter()
        .map(|(_, example_id, score)| ScoredExample { example_id, score })
        .collect();
    let prompt_order = ranked.iter().rev().map(|s| s.example_id.clone()).collect();
    Ok(SelectionResult {
        query_id: query_id.to_string(),
        strategy,
        trial,
        ranked,
        prompt_order,
    })
}

/// Uniformly draw k distinct bank examples per trial. Scores are zero; the
/// ranking carries no signal and lists ids in bank order.
pub fn select_random(
    bank: &ExampleBank,
    cfg: &SelectionConfig,
    query_id: &str,
) -> Result<Vec<SelectionResult>> {
    cfg.validate(bank.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut results = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let picked = rand::seq::index::sample(&mut rng, bank.len(), cfg.k);
        let scored = picked
            .into_iter()
            .map(|idx| (idx, bank.examples()[idx].id.clone(), 0.0))
            .collect();
        results.push(rank_top_k(
            query_id,
            Strategy::Random,
            Some(trial),
            scored,
            cfg.k,
        )?);
    }
    Ok(results)
}

/// Exact top-k cosine scan. `bank_vecs` must be in bank order; its position
/// is the tie-break key.
pub fn select_knn(
    query_id: &str,
    query_vec: &EmbeddingVector,
    bank_vecs: &[(String, EmbeddingVector)],
    k: usize,
) -> Result<SelectionResult> {
    select_knn_as(query_id, Strategy::KnnRaw, query_vec, bank_vecs, k)
}

fn select_knn_as(
    query_id: &str,
    strategy: Strategy,
    query_vec: &EmbeddingVector,
    bank_vecs: &[(String, EmbeddingVector)],
    k: usize,
) -> Result<SelectionResult> {
    let mut scored = Vec::with_capacity(bank_vecs.len());
    for (idx, (id, vec)) in bank_vecs.iter().enumerate() {
        let score = cosine_similarity(query_vec, vec).map_err(|e| tag_example(e, id))?;
        scored.push((idx, id.clone(), score));
    }
    rank_top_k(query_id, strategy, None, scored, k)
}

/// Per-coordinate mean accumulated in a canonical order, so any permutation
/// of `set` produces bit-identical output.
fn order_independent_mean(set: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = set
        .first()
        .ok_or_else(|| Error::Validation("candidate set is empty".into()))?;
    let dim = first.dim();
    for v in set {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: v.dim(),
            });
        }
    }
    let mut values = vec![0.0f64; dim];
    let mut column = Vec::with_capacity(set.len());
    for (d, slot) in values.iter_mut().enumerate() {
        column.clear();
        column.extend(set.iter().map(|v| v.values[d]));
        column.sort_by(f64::total_cmp);
        *slot = column.iter().sum::<f64>() / set.len() as f64;
    }
    Ok(EmbeddingVector {
        values,
        model_id: first.model_id.clone(),
    })
}

/// Similarity of two candidate sets as the cosine of their mean embeddings.
pub fn sim_consistency(s_t: &[EmbeddingVector], s_i: &[EmbeddingVector]) -> Result<f64> {
    let mean_t = order_independent_mean(s_t)?;
    let mean_i = order_independent_mean(s_i)?;
    if mean_t.is_zero() || mean_i.is_zero() {
        return Err(Error::DegenerateMean(
            "candidate embeddings cancel to a zero mean".into(),
        ));
    }
    cosine_similarity(&mean_t, &mean_i)
}

/// Similarity of two candidate sets as the best cosine over all cross pairs.
pub fn sim_distinctiveness(s_t: &[EmbeddingVector], s_i: &[EmbeddingVector]) -> Result<f64> {
    if s_t.is_empty() || s_i.is_empty() {
        return Err(Error::Validation("candidate set is empty".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for a in s_t {
        for b in s_i {
            let sim = cosine_similarity(a, b)?;
            if sim > best {
                best = sim;
            }
        }
    }
    Ok(best)
}

fn tag_example(e: Error, id: &str) -> Error {
    match e {
        Error::DegenerateEmbedding(msg) => {
            Error::DegenerateEmbedding(format!("example {id:?}: {msg}"))
        }
        Error::DegenerateMean(msg) => Error::DegenerateMean(format!("example {id:?}: {msg}")),
        other => other,
    }
}

/// Rank the bank by skill-space similarity. `bank_skill_vecs` holds each
/// example's candidate-set embeddings in bank order.
pub fn select_skill_knn(
    query_id: &str,
    query_skill_vecs: &[EmbeddingVector],
    bank_skill_vecs: &[(String, Vec<EmbeddingVector>)],
    variant: SkillVariant,
    k: usize,
) -> Result<SelectionResult> {
    if query_skill_vecs.is_empty() {
        return Err(Error::Validation("query has no skill embeddings".into()));
    }
    let mut scored = Vec::with_capacity(bank_skill_vecs.len());
    for (idx, (id, vecs)) in bank_skill_vecs.iter().enumerate() {
        if vecs.is_empty() {
            return Err(Error::MissingData {
                id: id.clone(),
                message: "example has no skill embeddings".into(),
            });
        }
        let score = match variant {
            SkillVariant::Base => cosine_similarity(&query_skill_vecs[0], &vecs[0]),
            SkillVariant::Consistency => sim_consistency(query_skill_vecs, vecs),
            SkillVariant::Distinctiveness => sim_distinctiveness(query_skill_vecs, vecs),
        }
        .map_err(|e| tag_example(e, id))?;
        scored.push((idx, id.clone(), score));
    }
    rank_top_k(query_id, variant.strategy(), None, scored, k)
}

/// Oracle ranking by cosine over gold-target embeddings.
pub fn select_oracle_target_knn(
    query_id: &str,
    query_target_vec: &EmbeddingVector,
    bank_target_vecs: &[(String, EmbeddingVector)],
    k: usize,
) -> Result<SelectionResult> {
    select_knn_as(
        query_id,
        Strategy::OracleTargetKnn,
        query_target_vec,
        bank_target_vecs,
        k,
    )
}

/// Oracle ranking by keyword-sketch overlap between the query's gold target
/// and each bank target.
pub fn select_oracle_sketch(
    query_id: &str,
    query_target: &str,
    bank: &ExampleBank,
    k: usize,
) -> Result<SelectionResult> {
    let query_kw = sketch_keywords(query_target);
    let scored = bank
        .examples()
        .iter()
        .enumerate()
        .map(|(idx, ex)| {
            let overlap = query_kw.intersection(&sketch_keywords(&ex.target)).count();
            (idx, ex.id.clone(), overlap as f64)
        })
        .collect();
    rank_top_k(query_id, Strategy::OracleSketch, None, scored, k)
}

/// Convenience for strategies scored over per-example vectors when callers
/// hold a map instead of an ordered slice; order comes from the bank.
pub fn bank_order_vecs(
    bank: &ExampleBank,
    by_id: &HashMap<String, EmbeddingVector>,
) -> Result<Vec<(String, EmbeddingVector)>> {
    bank.examples()
        .iter()
        .map(|ex| {
            by_id
                .get(&ex.id)
                .cloned()
                .map(|v| (ex.id.clone(), v))
                .ok_or_else(|| Error::MissingData {
                    id: ex.id.clone(),
                    message: "no embedding for example".into(),
                })
        })
        .collect()
}
