//! Embed bank questions with the local deterministic embedder, rank them
//! against a query by cosine similarity, and show the on-disk cache
//! absorbing repeat embeddings.

use exemplar::{select_knn, Embedder, EmbedderConfig, EmbeddingVector, SyntheticFixture};

fn cache_lines(dir: &std::path::Path) -> usize {
    std::fs::read_to_string(dir.join("embeddings.jsonl"))
        .map(|s| s.lines().count())
        .unwrap_or(0)
}

fn main() -> anyhow::Result<()> {
    let fixture = SyntheticFixture::generate(7);
    let bank = &fixture.bank;

    let cache_dir = tempfile::tempdir()?;
    let embedder = Embedder::new(EmbedderConfig::local(64))?.with_cache_dir(cache_dir.path())?;

    let texts: Vec<String> = bank.examples().iter().map(|ex| ex.question.clone()).collect();
    let vecs = embedder.embed_batch(&texts)?;
    let bank_vecs: Vec<(String, EmbeddingVector)> = bank
        .examples()
        .iter()
        .zip(vecs)
        .map(|(ex, v)| (ex.id.clone(), v))
        .collect();

    let query = &fixture.queries[0];
    let query_vec = embedder.embed_text(&query.question)?;
    let result = select_knn(&query.id, &query_vec, &bank_vecs, 5)?;

    println!("query [class {}]: {}", fixture.class_of(&query.id), query.question);
    println!("top {} neighbours by question cosine:", result.ranked.len());
    for scored in &result.ranked {
        let class = fixture.class_of(&scored.example_id);
        println!("  {:>7.4}  {}  class {}", scored.score, scored.example_id, class);
    }
    println!("prompt order (best match last): {:?}", result.prompt_order);

    // cache keys on whitespace-normalized text, so re-embedding the bank and
    // a noisy spelling of the query adds nothing
    let before = cache_lines(cache_dir.path());
    embedder.embed_batch(&texts)?;
    embedder.embed_text(&format!("  {}  ", query.question))?;
    let after = cache_lines(cache_dir.path());
    println!("cache entries before re-embed: {before}, after: {after}");
    Ok(())
}
