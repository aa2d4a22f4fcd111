//! Sketch SQL strings into sets of clause and operator keywords, compare
//! queries by sketch overlap, and rank a bank with the sketch oracle.

use exemplar::{select_oracle_sketch, sketch_keywords, sketch_similarity, Example, ExampleBank};

fn main() -> anyhow::Result<()> {
    let targets = [
        ("filter", "SELECT name FROM singer WHERE age > 30"),
        ("aggregate", "SELECT country, count(*) FROM singer GROUP BY country"),
        ("filtered-agg", "SELECT country, count(*) FROM singer WHERE age > 30 GROUP BY country HAVING count(*) > 2"),
        ("sorted", "SELECT name FROM singer ORDER BY age DESC LIMIT 3"),
        ("set-op", "SELECT name FROM singer INTERSECT SELECT name FROM judge"),
    ];

    println!("sketches:");
    for (label, sql) in &targets {
        let sketch: Vec<&str> = sketch_keywords(sql).into_iter().collect();
        println!("  {label:<13} {sketch:?}");
    }

    // overlap counts vocabulary items present in both sketches
    println!("\npairwise overlap:");
    print!("{:<13}", "");
    for (label, _) in &targets {
        print!("{label:>13}");
    }
    println!();
    for (row_label, row_sql) in &targets {
        print!("{row_label:<13}");
        for (_, col_sql) in &targets {
            print!("{:>13}", sketch_similarity(row_sql, col_sql));
        }
        println!();
    }

    // the oracle scores each bank target against the query's gold target
    let bank = ExampleBank::new(
        targets
            .iter()
            .enumerate()
            .map(|(i, (label, sql))| Example {
                id: label.to_string(),
                question: format!("question {i}"),
                schema: None,
                target: sql.to_string(),
                db_id: None,
            })
            .collect(),
        "text_to_sql",
    )?;
    let gold = "SELECT country FROM singer WHERE age > 25 GROUP BY country";
    let result = select_oracle_sketch("q-gold", gold, &bank, 3)?;
    println!("\ngold target: {gold}");
    println!("oracle ranking:");
    for scored in &result.ranked {
        println!("  overlap {:>2}  {}", scored.score, scored.example_id);
    }
    Ok(())
}
