//! Rewrite a raw question into a skill description by prompting a completion
//! backend with annotated demonstrations, then grow a candidate set by
//! permuting the demonstration order.

use exemplar::{
    build_rewrite_prompt, builtin_sql_demonstrations, generate_candidate_set, generate_skill,
    CompletionBackend, DecodingParams, DemonstrationSet, MockCompletion, QueryInput,
};

/// Keys its reply on whichever demonstration leads the prompt, so each
/// demonstration order yields a distinct candidate skill.
struct OrderSensitiveRewriter;

impl CompletionBackend for OrderSensitiveRewriter {
    fn complete(&self, prompt: &str, _params: &DecodingParams) -> exemplar::Result<Vec<String>> {
        let lead = prompt
            .lines()
            .next()
            .and_then(|line| line.strip_prefix("Input: "))
            .unwrap_or("")
            .split_whitespace()
            .take(2)
            .collect::<Vec<_>>()
            .join(" ");
        Ok(vec![format!(
            " to solve this task we aggregate per group, reading from the \"{lead}\" demonstration first"
        )])
    }

    fn model_id(&self) -> &str {
        "order-sensitive"
    }
}

fn main() -> anyhow::Result<()> {
    let shipped = builtin_sql_demonstrations();
    println!("shipped demonstrations: {}", shipped.len());

    // a trimmed set keeps the rendered prompt short enough to print whole
    let demos = DemonstrationSet::new(shipped.demos[..3].to_vec(), shipped.task_tag.clone())?;
    let query = QueryInput {
        id: "q-rewrite".into(),
        question: "Which department has the most employees?".into(),
        schema: Some("department [id, name]\nemployee [id, dept_id]".into()),
    };

    let prompt = build_rewrite_prompt(&demos, &[0, 1, 2], &query)?;
    println!("--- rewrite prompt, identity order ---");
    println!("{prompt}");
    println!("--- end prompt ---\n");

    // a canned backend stands in for the rewrite model; run-on text past the
    // next "Input:" label is trimmed away
    let canned = MockCompletion::new("canned").with_default(
        " To solve this task, we need to count rows per group and keep the maximum.\nInput: ghost follow-on\nSkill: spam",
    );
    let decoding = DecodingParams::default();
    let skill = generate_skill(&query, &demos, &[0, 1, 2], &canned, &decoding)?;
    println!("generated skill: {skill}\n");

    // candidate sets start from the identity order; shuffled orders follow,
    // and exact-duplicate skills are dropped
    let set = generate_candidate_set(&query, &demos, 4, 11, &OrderSensitiveRewriter, &decoding)?;
    println!("candidate set for {} ({} distinct candidates):", set.input_id, set.candidates.len());
    for candidate in &set.candidates {
        println!("  order {:?}: {}", candidate.permutation, candidate.skill);
    }
    println!("base skill: {}", set.base_skill());
    Ok(())
}
