//! Run every selection strategy on one query of the synthetic fixture and
//! compare how many of the chosen examples share the query's operation class.
//!
//! The fixture is built so raw question text tracks the database while the
//! skill description tracks the class, which is what separates the
//! strategies.

use exemplar::{
    embedding_text_of, generate_candidate_set, select_knn, select_oracle_sketch,
    select_oracle_target_knn, select_random, select_skill_knn, DecodingParams, Embedder,
    EmbedderConfig, EmbeddingVector, SelectionConfig, SelectionResult, Strategy, SyntheticFixture,
};

const K: usize = 4;
const CANDIDATES_PER_INPUT: usize = 5;

fn main() -> anyhow::Result<()> {
    let fixture = SyntheticFixture::generate(3);
    let bank = &fixture.bank;
    let embedder = Embedder::new(EmbedderConfig::local(64))?;
    let rewriter = fixture.rewrite_backend();
    let demos = fixture.demonstrations();
    let decoding = DecodingParams::default();

    let query = &fixture.queries[0];
    let query_class = fixture.class_of(&query.id);
    println!("query [class {query_class}]: {}", query.question);
    println!("gold target: {}\n", query.target);

    // per-example skill candidate sets, embedded; the deterministic rewrite
    // backend answers by question, so sets here collapse to one candidate
    let mut bank_question_vecs: Vec<(String, EmbeddingVector)> = Vec::new();
    let mut bank_target_vecs: Vec<(String, EmbeddingVector)> = Vec::new();
    let mut bank_skill_vecs: Vec<(String, Vec<EmbeddingVector>)> = Vec::new();
    for (i, ex) in bank.examples().iter().enumerate() {
        bank_question_vecs.push((ex.id.clone(), embedder.embed_text(&embedding_text_of(ex))?));
        bank_target_vecs.push((ex.id.clone(), embedder.embed_text(&ex.target)?));
        let set =
            generate_candidate_set(ex, &demos, CANDIDATES_PER_INPUT, i as u64, &rewriter, &decoding)?;
        let skills: Vec<String> = set.skills().map(str::to_string).collect();
        bank_skill_vecs.push((ex.id.clone(), embedder.embed_batch(&skills)?));
    }

    let query_question_vec = embedder.embed_text(&embedding_text_of(query))?;
    let query_target_vec = embedder.embed_text(&query.target)?;
    let query_set =
        generate_candidate_set(query, &demos, CANDIDATES_PER_INPUT, 1000, &rewriter, &decoding)?;
    let query_skills: Vec<String> = query_set.skills().map(str::to_string).collect();
    let query_skill_vecs = embedder.embed_batch(&query_skills)?;

    println!("{:<22} {:<30} same-class", "strategy", "selected (best first)");
    for strategy in Strategy::ALL {
        let result: SelectionResult = match strategy {
            Strategy::Random => {
                let cfg = SelectionConfig { k: K, strategy, seed: 9, trials: 1 };
                select_random(bank, &cfg, &query.id)?.remove(0)
            }
            Strategy::KnnRaw => select_knn(&query.id, &query_question_vec, &bank_question_vecs, K)?,
            Strategy::SkillBase | Strategy::SkillConsistency | Strategy::SkillDistinctiveness => {
                let variant = strategy.skill_variant().expect("skill strategy");
                select_skill_knn(&query.id, &query_skill_vecs, &bank_skill_vecs, variant, K)?
            }
            Strategy::OracleTargetKnn => {
                select_oracle_target_knn(&query.id, &query_target_vec, &bank_target_vecs, K)?
            }
            Strategy::OracleSketch => select_oracle_sketch(&query.id, &query.target, bank, K)?,
        };
        let ids: Vec<&str> = result.ranked.iter().map(|s| s.example_id.as_str()).collect();
        let same = ids.iter().filter(|id| fixture.class_of(id) == query_class).count();
        println!("{:<22} {:<30} {same}/{K}", strategy.name(), ids.join(" "));
    }
    Ok(())
}
