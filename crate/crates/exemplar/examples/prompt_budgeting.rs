//! Assemble a few-shot prompt under a shrinking context budget and watch the
//! least-similar examples fall off the front, then run a completion and see
//! run-on text trimmed at the stop label.

use exemplar::{
    assemble_prompt, complete, DecodingParams, Example, ExampleBank, MockCompletion, QueryInput,
    ScoredExample, SelectionResult, Strategy,
};

fn main() -> anyhow::Result<()> {
    let examples = vec![
        Example {
            id: "e1".into(),
            question: "How many heads of the departments are older than 56?".into(),
            schema: Some("head [id, name, age]".into()),
            target: "SELECT count(*) FROM head WHERE age > 56".into(),
            db_id: Some("department".into()),
        },
        Example {
            id: "e2".into(),
            question: "List the name of every department.".into(),
            schema: Some("department [id, name, budget]".into()),
            target: "SELECT name FROM department".into(),
            db_id: Some("department".into()),
        },
        Example {
            id: "e3".into(),
            question: "What is the total budget across departments?".into(),
            schema: Some("department [id, name, budget]".into()),
            target: "SELECT sum(budget) FROM department".into(),
            db_id: Some("department".into()),
        },
        Example {
            id: "e4".into(),
            question: "Show departments with a budget above average.".into(),
            schema: Some("department [id, name, budget]".into()),
            target: "SELECT name FROM department WHERE budget > (SELECT avg(budget) FROM department)".into(),
            db_id: Some("department".into()),
        },
    ];
    let bank = ExampleBank::new(examples, "text_to_sql")?;

    // a ready-made ranking stands in for a selector run
    let ranked = vec![
        ScoredExample { example_id: "e4".into(), score: 0.91 },
        ScoredExample { example_id: "e3".into(), score: 0.74 },
        ScoredExample { example_id: "e1".into(), score: 0.52 },
        ScoredExample { example_id: "e2".into(), score: 0.31 },
    ];
    let selection = SelectionResult {
        query_id: "q".into(),
        strategy: Strategy::KnnRaw,
        trial: None,
        prompt_order: ranked.iter().rev().map(|s| s.example_id.clone()).collect(),
        ranked,
    };
    let query = QueryInput {
        id: "q".into(),
        question: "Which department head is the youngest?".into(),
        schema: Some("head [id, name, age]\ndepartment [id, name, budget]".into()),
    };

    let mut params = DecodingParams::default();
    println!("{:>7}  {:>6}  {:>7}  rendered order", "budget", "tokens", "dropped");
    loop {
        let spec = assemble_prompt(&selection, &bank, &query, &params)?;
        println!(
            "{:>7}  {:>6}  {:>7}  {:?}",
            params.max_context_tokens - params.max_decode_tokens,
            spec.token_estimate,
            spec.truncated_count,
            spec.example_ids_in_order
        );
        if spec.example_ids_in_order.is_empty() {
            // show the final, fully truncated prompt and run a completion
            println!("\n--- prompt with every example dropped ---");
            println!("{}", spec.rendered);
            println!("--- end prompt ---");
            break;
        }
        // shrink the window just below what the last assembly needed,
        // forcing at least one more drop
        params.max_context_tokens = spec.token_estimate + params.max_decode_tokens - 1;
    }

    let full = assemble_prompt(&selection, &bank, &query, &DecodingParams::default())?;
    println!("\nstop label: {:?}", full.stop_label);
    let backbone = MockCompletion::new("demo-backbone")
        .with_default(" SELECT name FROM head ORDER BY age LIMIT 1\n\nQuestion: fabricated next question\nSQL: SELECT spam");
    let answers = complete(&full, &backbone, &DecodingParams::default())?;
    println!("trimmed completion: {:?}", answers[0]);
    Ok(())
}
