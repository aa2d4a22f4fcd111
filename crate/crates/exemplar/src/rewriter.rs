//! Skill rewriting: turn a raw question into a natural-language description
//! of the operations its answer requires, by prompting a completion backend
//! with a fixed set of annotated demonstrations.
//!
//! Variation for the consistency and distinctiveness selectors comes from
//! shuffling the demonstration order, never from sampling temperature, so a
//! deterministic backend plus a fixed seed reproduces every candidate set.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::CompletionBackend;
use crate::bank::{normalize_whitespace, HasQuestion};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::prompting::{trim_at_label, DecodingParams};

/// One worked example for the rewrite prompt: a question paired with the
/// skill description a human wrote for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDemonstration {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub skill: String,
}

/// The ordered demonstrations shared by every rewrite in a task. Order
/// matters: it is what candidate generation permutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub demos: Vec<AnnotatedDemonstration>,
    pub task_tag: String,
}

impl DemonstrationSet {
    pub fn new(demos: Vec<AnnotatedDemonstration>, task_tag: String) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::Validation("demonstration set is empty".into()));
        }
        for (idx, demo) in demos.iter().enumerate() {
            if demo.question.trim().is_empty() || demo.skill.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "demonstration {idx} has an empty question or skill"
                )));
            }
        }
        Ok(DemonstrationSet { demos, task_tag })
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }
}

/// Load demonstrations from a JSONL file of {question, schema?, skill}.
pub fn load_demonstrations(path: &Path, task_tag: &str) -> Result<DemonstrationSet> {
    let demos: Vec<AnnotatedDemonstration> = jsonl::read_records(path)?;
    DemonstrationSet::new(demos, task_tag.to_string())
}

/// The 16 shipped text-to-SQL demonstrations.
pub fn builtin_sql_demonstrations() -> DemonstrationSet {
    let demos = jsonl::parse_records(
        include_str!("../data/demos_text_to_sql.jsonl"),
        "data/demos_text_to_sql.jsonl",
    )
    .expect("shipped demonstrations parse");
    DemonstrationSet::new(demos, "text_to_sql".into()).expect("shipped demonstrations validate")
}

/// The 16 shipped semantic-parsing demonstrations.
pub fn builtin_cogs_demonstrations() -> DemonstrationSet {
    let demos = jsonl::parse_records(
        include_str!("../data/demos_cogs.jsonl"),
        "data/demos_cogs.jsonl",
    )
    .expect("shipped demonstrations parse");
    DemonstrationSet::new(demos, "cogs".into()).expect("shipped demonstrations validate")
}

/// One generated skill plus how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCandidate {
    pub skill: String,
    /// Demonstration order used for this generation.
    pub permutation: Vec<usize>,
    pub model_id: String,
    pub generated_at_unix: u64,
}

/// All candidate skills generated for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCandidateSet {
    pub input_id: String,
    pub candidates: Vec<SkillCandidate>,
}

impl SkillCandidateSet {
    /// The representation the base variant uses: the first surviving
    /// candidate, which is the identity-order generation whenever that one
    /// produced a non-empty skill.
    pub fn base_skill(&self) -> &str {
        &self.candidates[0].skill
    }

    pub fn skills(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.skill.as_str())
    }
}

const QUESTION_LABEL: &str = "Input:";
const SCHEMA_LABEL: &str = "Schema:";
const SKILL_LABEL: &str = "Skill:";

fn check_permutation(permutation: &[usize], n: usize) -> Result<()> {
    if permutation.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "permutation has {} entries for {} demonstrations",
            permutation.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &idx in permutation {
        if idx >= n || seen[idx] {
            return Err(Error::InvalidPermutation(format!(
                "index {idx} out of range or repeated"
            )));
        }
        seen[idx] = true;
    }
    Ok(())
}

/// Render the rewrite prompt: demonstrations in permutation order, each as a
/// question (and schema when present) followed by its skill, then the input
/// with an empty skill slot.
pub fn build_rewrite_prompt(
    demos: &DemonstrationSet,
    permutation: &[usize],
    x: &dyn HasQuestion,
) -> Result<String> {
    check_permutation(permutation, demos.len())?;
    let mut blocks = Vec::with_capacity(demos.len() + 1);
    for &idx in permutation {
        let demo = &demos.demos[idx];
        let mut block = format!("{QUESTION_LABEL} {}\n", demo.question);
        if let Some(schema) = &demo.schema {
            block.push_str(&format!("{SCHEMA_LABEL} {schema}\n"));
        }
        block.push_str(&format!("{SKILL_LABEL} {}", demo.skill));
        blocks.push(block);
    }
    let mut query_block = format!("{QUESTION_LABEL} {}\n", x.question());
    if let Some(schema) = x.schema() {
        query_block.push_str(&format!("{SCHEMA_LABEL} {schema}\n"));
    }
    query_block.push_str(SKILL_LABEL);
    blocks.push(query_block);
    Ok(blocks.join("\n\n"))
}

/// Generate one skill for `x` under a fixed demonstration order.
pub fn generate_skill(
    x: &dyn HasQuestion,
    demos: &DemonstrationSet,
    permutation: &[usize],
    backend: &dyn CompletionBackend,
    decoding: &DecodingParams,
) -> Result<String> {
    let prompt = build_rewrite_prompt(demos, permutation, x)?;
    let completions = backend.complete(&prompt, decoding)?;
    let raw = completions.into_iter().next().unwrap_or_default();
    let skill = trim_at_label(&raw, QUESTION_LABEL);
    let skill = normalize_whitespace(&skill);
    if skill.is_empty() {
        return Err(Error::EmptySkill);
    }
    Ok(skill)
}

/// Generate up to `m` candidate skills for `x` by permuting the
/// demonstration order. The first permutation is always the identity; the
/// rest are uniform shuffles from a seeded generator, re-drawn on collision
/// up to a bound. Candidates are deduplicated by exact string equality.
pub fn generate_candidate_set(
    x: &dyn HasQuestion,
    demos: &DemonstrationSet,
    m: usize,
    seed: u64,
    backend: &dyn CompletionBackend,
    decoding: &DecodingParams,
) -> Result<SkillCandidateSet> {
    if m == 0 {
        return Err(Error::Validation("candidate count m must be >= 1".into()));
    }
    let n = demos.len();
    let identity: Vec<usize> = (0..n).collect();
    let mut permutations = vec![identity.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while permutations.len() < m {
        let mut drawn = identity.clone();
        // a duplicate order would just repeat a generation; re-draw a few
        // times, then accept (tiny n can exhaust distinct orders)
        for _ in 0..20 {
            drawn.shuffle(&mut rng);
            if !permutations.contains(&drawn) {
                break;
            }
        }
        permutations.push(drawn);
    }

    let generated_at_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut candidates: Vec<SkillCandidate> = Vec::with_capacity(m);
    for permutation in permutations {
        let skill = match generate_skill(x, demos, &permutation, backend, decoding) {
            Ok(skill) => skill,
            Err(Error::EmptySkill) => continue,
            Err(other) => return Err(other),
        };
        if candidates.iter().any(|c| c.skill == skill) {
            continue;
        }
        candidates.push(SkillCandidate {
            skill,
            permutation,
            model_id: backend.model_id().to_string(),
            generated_at_unix,
        });
    }
    if candidates.is_empty() {
        return Err(Error::CandidateSetEmpty {
            input_id: x.id().to_string(),
        });
    }
    Ok(SkillCandidateSet {
        input_id: x.id().to_string(),
        candidates,
    })
}
