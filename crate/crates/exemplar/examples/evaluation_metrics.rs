//! The scoring toolkit: logical-form normalization, exact match, recall@N
//! over sampled outputs, selection diversity, and a full report from joined
//! prediction/selection records.

use exemplar::{
    diversity_distinct_dbs, evaluate_records, exact_match, normalize_logical_form, recall_at_n,
    Example, ExampleBank, PredictionRecord, ScoredExample, SelectionResult, Strategy,
};

fn main() -> anyhow::Result<()> {
    // normalization forgives whitespace, bracket spacing, and trailing
    // semicolons, but never case
    let variants = [
        "SELECT count(*) FROM head WHERE age > 56",
        "SELECT   count( * )  FROM head WHERE age > 56 ;",
        "select count(*) from head where age > 56",
    ];
    println!("normalization:");
    for v in &variants {
        println!("  {:?}\n    -> {:?}", v, normalize_logical_form(v));
    }
    println!("variant 0 == variant 1: {}", exact_match(variants[0], variants[1]));
    println!("variant 0 == variant 2: {}\n", exact_match(variants[0], variants[2]));

    // recall@N re-ranks samples by frequency of their normalized form
    let samples: Vec<String> = [
        "SELECT name FROM t",
        "SELECT id FROM t",
        "SELECT name FROM t;",
        "SELECT  name  FROM t",
        "SELECT age FROM t",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for n in 1..=3 {
        println!("recall@{n} for target 'SELECT age FROM t': {}", recall_at_n(&samples, n, "SELECT age FROM t"));
    }
    println!();

    // a two-database bank; selections that straddle both score diversity 2
    let bank = ExampleBank::new(
        vec![
            example("a1", "db_a", "SELECT name FROM singer"),
            example("a2", "db_a", "SELECT count(*) FROM singer"),
            example("b1", "db_b", "SELECT name FROM judge WHERE rank > 3"),
            example("b2", "db_b", "SELECT avg(score) FROM judge"),
        ],
        "text_to_sql",
    )?;
    let picked: Vec<&Example> = vec![&bank.examples()[0], &bank.examples()[2]];
    println!("diversity of [a1, b1]: {} distinct dbs\n", diversity_distinct_dbs(&picked));

    // joined scoring: selections drive the join against queries and
    // predictions, and the report aggregates every metric
    let queries = vec![
        example("q1", "db_a", "SELECT name FROM singer WHERE age > 30"),
        example("q2", "db_b", "SELECT count(*) FROM judge"),
    ];
    let selections: Vec<SelectionResult> = queries
        .iter()
        .map(|q| SelectionResult {
            query_id: q.id.clone(),
            strategy: Strategy::KnnRaw,
            trial: None,
            ranked: vec![
                ScoredExample { example_id: "a1".into(), score: 0.9 },
                ScoredExample { example_id: "b1".into(), score: 0.8 },
            ],
            prompt_order: vec!["b1".into(), "a1".into()],
        })
        .collect();
    let predictions = vec![
        PredictionRecord {
            query_id: "q1".into(),
            trial: None,
            prediction: "SELECT name FROM singer WHERE age > 30;".into(),
        },
        PredictionRecord {
            query_id: "q2".into(),
            trial: None,
            prediction: "SELECT count(*) FROM singer".into(),
        },
    ];
    let (records, report) = evaluate_records(&predictions, &queries, &selections, &bank)?;
    for record in &records {
        println!(
            "{}: exact_match={} sketch_overlap={} selected={:?}",
            record.query_id, record.exact_match, record.sketch_overlap, record.selected_ids
        );
    }
    println!("\nreport:");
    println!("  n:                  {}", report.n);
    println!("  exact_match_rate:   {:.3}", report.exact_match_rate);
    println!("  mean_sketch_overlap:{:.3}", report.mean_sketch_overlap);
    println!("  mean_distinct_dbs:  {:.3}", report.diversity_mean_distinct_dbs);
    println!("  mean_tables:        {:.3}", report.complexity_mean_tables);
    println!("  mean_target_len:    {:.3}", report.complexity_mean_target_len);
    Ok(())
}

fn example(id: &str, db: &str, target: &str) -> Example {
    Example {
        id: id.into(),
        question: format!("question for {id}"),
        schema: Some("t [c1, c2]".into()),
        target: target.into(),
        db_id: Some(db.into()),
    }
}
