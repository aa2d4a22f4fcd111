//! Few-shot example selection engine and evaluation harness for in-context
//! learning.
//!
//! The library covers the full selection pipeline: example banks are loaded
//! from line-delimited record files, input queries are rewritten into
//! skill-based representations by prompting a completion backend, the
//! representations are embedded, and in-context examples are picked by
//! cosine-KNN under several strategies (raw-input KNN, skill-based base /
//! consistency / distinctiveness, random, and two target-side oracles).
//! Selected examples are assembled into prompts under a token budget, sent to
//! a backbone model, and the resulting predictions are scored.
//!
//! Every remote dependency has a deterministic offline stand-in (a local
//! hashed bag-of-words embedder and a canned-map completion backend), so the
//! whole pipeline runs reproducibly without network access.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `exemplar` binary for the stage-by-stage command line.

pub mod backend;
pub mod bank;
mod digest;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod jsonl;
pub mod pipeline;
pub mod prompting;
pub mod rewriter;
pub mod selector;
pub mod synthetic;

pub use backend::{
    BackboneEndpoint, BackboneKind, CachedBackend, CompletionBackend, CompletionCache,
    HttpCompletionBackend, MockCompletion,
};
pub use bank::{
    embedding_text_of, load_bank, save_bank, Example, ExampleBank, HasQuestion, QueryInput,
};
pub use embedding::{
    cosine_similarity, local_deterministic_embed, Embedder, EmbedderConfig, EmbedderKind,
    EmbeddingCache, EmbeddingVector,
};
pub use error::{Error, Result};
pub use evaluation::{
    bank_table_counts, complexity_stats, diversity_distinct_dbs, evaluate_records, evaluate_run,
    exact_match, export_predictions_tsv, normalize_logical_form, recall_at_n, EvalRecord,
    EvalReport, PredictionRecord,
};
pub use pipeline::{EmbeddedSet, PipelineOutcome, RunConfig, StageGate, StagePlan};
pub use prompting::{
    assemble_prompt, assemble_prompt_with, complete, estimate_tokens, DecodingParams, PromptSpec,
    PromptTemplate,
};
pub use rewriter::{
    build_rewrite_prompt, builtin_cogs_demonstrations, builtin_sql_demonstrations,
    generate_candidate_set, generate_skill, load_demonstrations, AnnotatedDemonstration,
    DemonstrationSet, SkillCandidate, SkillCandidateSet,
};
pub use selector::{
    bank_order_vecs, select_knn, select_oracle_sketch, select_oracle_target_knn, select_random,
    select_skill_knn, sim_consistency, sim_distinctiveness, sketch_keywords, sketch_similarity,
    ScoredExample, SelectionConfig, SelectionResult, SkillVariant, Strategy,
};
pub use synthetic::SyntheticFixture;
