//! Build an example bank in code, persist it, reload it, and compute the
//! aggregate statistics the `bank stats` subcommand reports.

use exemplar::{bank_table_counts, complexity_stats, load_bank, save_bank, Example, ExampleBank};

fn main() -> anyhow::Result<()> {
    let examples = vec![
        Example {
            id: "concert-001".into(),
            question: "How many singers do we have?".into(),
            schema: Some("singer [id, name, age]\nconcert [id, venue, year]".into()),
            target: "SELECT count(*) FROM singer".into(),
            db_id: Some("concert_singer".into()),
        },
        Example {
            id: "concert-002".into(),
            question: "List the venues used after 2014.".into(),
            schema: Some("singer [id, name, age]\nconcert [id, venue, year]".into()),
            target: "SELECT venue FROM concert WHERE year > 2014".into(),
            db_id: Some("concert_singer".into()),
        },
        Example {
            id: "pets-001".into(),
            question: "What is the average pet age?".into(),
            schema: Some("pet [id, kind, age]".into()),
            target: "SELECT avg(age) FROM pet".into(),
            db_id: Some("pets".into()),
        },
        Example {
            id: "pets-002".into(),
            question: "Show the oldest pet of each kind.".into(),
            schema: Some("pet [id, kind, age]".into()),
            target: "SELECT kind, max(age) FROM pet GROUP BY kind".into(),
            db_id: Some("pets".into()),
        },
    ];
    let bank = ExampleBank::new(examples, "text_to_sql")?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("bank.jsonl");
    save_bank(&bank, &path)?;
    let loaded = load_bank(&path, "text_to_sql")?;

    println!("bank: {} examples across {} databases", loaded.len(), loaded.distinct_dbs());
    for example in loaded.examples() {
        println!("  {} [{}] {}", example.id, example.db_key(), example.question);
    }

    // schema table counts come from parsing each example's schema lines
    let tables = bank_table_counts(&loaded);
    let all: Vec<&Example> = loaded.examples().iter().collect();
    let (mean_tables, mean_target_tokens) = complexity_stats(&all, &tables)?;
    println!("mean schema tables:      {mean_tables:.2}");
    println!("mean target tokens:      {mean_target_tokens:.2}");
    println!("round-trip preserved:    {}", loaded.examples() == bank.examples());
    Ok(())
}
