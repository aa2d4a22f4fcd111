//! Final prompt assembly and backbone invocation.
//!
//! A prompt is the selected examples rendered through a task template, least
//! similar first so the best match sits right before the query block, then
//! the query itself with an empty answer slot. Token budgeting drops the
//! least similar examples when the context window cannot hold all k.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::CompletionBackend;
use crate::bank::ExampleBank;
use crate::bank::QueryInput;
use crate::error::{Error, Result};
use crate::selector::SelectionResult;

/// Decoding regime for a completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_decode")]
    pub max_decode_tokens: usize,
    #[serde(default = "default_context")]
    pub max_context_tokens: usize,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_decode() -> usize {
    200
}

fn default_context() -> usize {
    4096
}

fn default_samples() -> usize {
    1
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            max_decode_tokens: default_decode(),
            max_context_tokens: default_context(),
            n_samples: default_samples(),
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(Error::Validation("temperature must be finite and >= 0".into()));
        }
        if self.max_decode_tokens == 0 || self.max_context_tokens == 0 || self.n_samples == 0 {
            return Err(Error::Validation(
                "token limits and n_samples must be positive".into(),
            ));
        }
        // multiple samples only make sense when sampling is stochastic
        if self.n_samples > 1 && self.temperature == 0.0 {
            return Err(Error::Validation(
                "n_samples > 1 requires temperature > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Task-specific prompt layout. Blocks use `{question}`, `{schema}` and
/// `{target}` placeholders; a line whose schema placeholder has no value is
/// dropped rather than rendered empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub example_block: String,
    pub query_block: String,
    pub separator: String,
    pub stop_label: String,
}

const TEXT_TO_SQL_TEMPLATE: &str = include_str!("../data/templates/text_to_sql.toml");
const COGS_TEMPLATE: &str = include_str!("../data/templates/cogs.toml");
const DEFAULT_TEMPLATE: &str = include_str!("../data/templates/default.toml");

impl PromptTemplate {
    /// Built-in template for a task tag; unknown tags get the default layout.
    pub fn for_task(task_tag: &str) -> PromptTemplate {
        let source = match task_tag {
            "text_to_sql" => TEXT_TO_SQL_TEMPLATE,
            "cogs" => COGS_TEMPLATE,
            _ => DEFAULT_TEMPLATE,
        };
        toml::from_str(source).expect("built-in templates parse")
    }

    pub fn from_file(path: &Path) -> Result<PromptTemplate> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let template: PromptTemplate =
            toml::from_str(&source).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.example_block.contains("{question}") || !self.example_block.contains("{target}") {
            return Err(Error::Validation(
                "example_block must contain {question} and {target}".into(),
            ));
        }
        if !self.query_block.contains("{question}") || self.query_block.contains("{target}") {
            return Err(Error::Validation(
                "query_block must contain {question} and no {target}".into(),
            ));
        }
        if self.stop_label.is_empty() {
            return Err(Error::Validation("stop_label must be non-empty".into()));
        }
        Ok(())
    }

    fn render_block(block: &str, question: &str, schema: Option<&str>, target: Option<&str>) -> String {
        let mut lines = Vec::new();
        for line in block.lines() {
            if line.contains("{schema}") && schema.is_none() {
                continue;
            }
            let mut rendered = line.replace("{question}", question);
            if let Some(s) = schema {
                rendered = rendered.replace("{schema}", s);
            }
            if let Some(t) = target {
                rendered = rendered.replace("{target}", t);
            }
            lines.push(rendered);
        }
        lines.join("\n")
    }
}

/// A fully rendered prompt plus the bookkeeping needed to check the budget
/// contract and trim completions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub rendered: String,
    /// Example ids in rendering order (ascending similarity), after any
    /// budget-forced drops.
    pub example_ids_in_order: Vec<String>,
    pub token_estimate: usize,
    pub truncated_count: usize,
    pub stop_label: String,
}

/// Deterministic token over-estimate: one token per three bytes, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(3)
}

/// Render the prompt for `selection` over `bank`, dropping least-similar
/// examples from the front when the estimate exceeds the context budget.
pub fn assemble_prompt(
    selection: &SelectionResult,
    bank: &ExampleBank,
    query: &QueryInput,
    params: &DecodingParams,
) -> Result<PromptSpec> {
    let template = PromptTemplate::for_task(&bank.task_tag);
    assemble_prompt_with(selection, bank, query, params, &template)
}

pub fn assemble_prompt_with(
    selection: &SelectionResult,
    bank: &ExampleBank,
    query: &QueryInput,
    params: &DecodingParams,
    template: &PromptTemplate,
) -> Result<PromptSpec> {
    params.validate()?;
    if params.max_context_tokens <= params.max_decode_tokens {
        return Err(Error::BudgetExceeded(format!(
            "max_context_tokens {} leaves no room for {} decode tokens",
            params.max_context_tokens, params.max_decode_tokens
        )));
    }
    let budget = params.max_context_tokens - params.max_decode_tokens;

    let mut blocks = Vec::with_capacity(selection.prompt_order.len());
    for id in &selection.prompt_order {
        let example = bank.get(id).ok_or_else(|| Error::MissingData {
            id: id.clone(),
            message: "selected example not present in bank".into(),
        })?;
        blocks.push(PromptTemplate::render_block(
            &template.example_block,
            &example.question,
            example.schema.as_deref(),
            Some(&example.target),
        ));
    }
    let query_block = PromptTemplate::render_block(
        &template.query_block,
        &query.question,
        query.schema.as_deref(),
        None,
    );

    // drop from the front (least similar) until the estimate fits
    for dropped in 0..=blocks.len() {
        let mut parts: Vec<&str> = blocks[dropped..].iter().map(String::as_str).collect();
        parts.push(&query_block);
        let rendered = parts.join(&template.separator);
        let token_estimate = estimate_tokens(&rendered);
        if token_estimate <= budget {
            return Ok(PromptSpec {
                rendered,
                example_ids_in_order: selection.prompt_order[dropped..].to_vec(),
                token_estimate,
                truncated_count: dropped,
                stop_label: template.stop_label.clone(),
            });
        }
    }
    Err(Error::BudgetExceeded(format!(
        "query {:?} alone estimates over the {budget}-token budget",
        query.id
    )))
}

/// Cut `text` at the first line that opens with `label`, the delimiter that
/// starts each example block, so run-on generations cannot leak the next
/// fabricated example into the answer.
pub(crate) fn trim_at_label(text: &str, label: &str) -> String {
    let mut kept = Vec::new();
    for line in text.lines() {
        if line.trim_start().starts_with(label) {
            break;
        }
        kept.push(line);
    }
    kept.join("\n").trim().to_string()
}

/// Invoke the backbone on an assembled prompt and trim each completion at
/// the example delimiter.
pub fn complete(
    prompt: &PromptSpec,
    backbone: &dyn CompletionBackend,
    params: &DecodingParams,
) -> Result<Vec<String>> {
    params.validate()?;
    let raw = backbone.complete(&prompt.rendered, params)?;
    Ok(raw
        .into_iter()
        .map(|text| trim_at_label(&text, &prompt.stop_label))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockCompletion;
    use crate::bank::Example;
    use crate::selector::{ScoredExample, SelectionResult, Strategy};

    fn bank_of(rows: &[(&str, &str, &str)]) -> ExampleBank {
        let examples = rows
            .iter()
            .map(|(id, question, target)| Example {
                id: id.to_string(),
                question: question.to_string(),
                schema: None,
                target: target.to_string(),
                db_id: None,
            })
            .collect();
        ExampleBank::new(examples, "demo").unwrap()
    }

    fn selection_of(scored: &[(&str, f64)]) -> SelectionResult {
        let ranked: Vec<ScoredExample> = scored
            .iter()
            .map(|(id, score)| ScoredExample {
                example_id: id.to_string(),
                score: *score,
            })
            .collect();
        let prompt_order = ranked.iter().rev().map(|s| s.example_id.clone()).collect();
        SelectionResult {
            query_id: "q".into(),
            strategy: Strategy::KnnRaw,
            trial: None,
            ranked,
            prompt_order,
        }
    }

    fn query(question: &str) -> QueryInput {
        QueryInput {
            id: "q".into(),
            question: question.into(),
            schema: None,
        }
    }

    #[test]
    fn token_estimate_formula() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens(&"x".repeat(300)), 100);
        assert_eq!(estimate_tokens("ab"), 1);
        assert_eq!(estimate_tokens("abcd"), 2);
        let a = "hello";
        let b = " world and more";
        let joined = format!("{a}{b}");
        assert!(estimate_tokens(&joined) >= estimate_tokens(a).max(estimate_tokens(b)));
    }

    #[test]
    fn higher_similarity_sits_closer_to_the_query() {
        let bank = bank_of(&[("a", "question a", "target a"), ("b", "question b", "target b")]);
        let selection = selection_of(&[("a", 0.9), ("b", 0.5)]);
        let spec = assemble_prompt(&selection, &bank, &query("the query"), &DecodingParams::default()).unwrap();
        let pos_b = spec.rendered.find("question b").unwrap();
        let pos_a = spec.rendered.find("question a").unwrap();
        let pos_q = spec.rendered.find("the query").unwrap();
        assert!(pos_b < pos_a && pos_a < pos_q);
        assert_eq!(spec.example_ids_in_order, vec!["b", "a"]);
        assert_eq!(spec.truncated_count, 0);
    }

    #[test]
    fn empty_selection_renders_query_alone() {
        let bank = bank_of(&[("a", "question a", "target a")]);
        let selection = selection_of(&[]);
        let spec = assemble_prompt(&selection, &bank, &query("solo query"), &DecodingParams::default()).unwrap();
        assert!(spec.rendered.starts_with("Input: solo query"));
        assert!(spec.example_ids_in_order.is_empty());
    }

    #[test]
    fn budget_drops_exactly_the_least_similar() {
        let bank = bank_of(&[
            ("a", "question aaaa", "target aaaa"),
            ("b", "question bbbb", "target bbbb"),
            ("c", "question cccc", "target cccc"),
            ("d", "question dddd", "target dddd"),
        ]);
        let selection = selection_of(&[("a", 0.9), ("b", 0.8), ("c", 0.7), ("d", 0.6)]);
        let q = query("a budgeted query");
        let loose = DecodingParams::default();
        let full = assemble_prompt(&selection, &bank, &q, &loose).unwrap();

        let drop_one = selection_of(&[("a", 0.9), ("b", 0.8), ("c", 0.7)]);
        let three = assemble_prompt(&drop_one, &bank, &q, &loose).unwrap();
        assert!(full.token_estimate > three.token_estimate);

        // budget admits three blocks but not four
        let tight = DecodingParams {
            max_context_tokens: three.token_estimate + loose.max_decode_tokens,
            ..loose.clone()
        };
        let spec = assemble_prompt(&selection, &bank, &q, &tight).unwrap();
        assert_eq!(spec.truncated_count, 1);
        assert_eq!(spec.example_ids_in_order, vec!["c", "b", "a"]);
        assert!(!spec.rendered.contains("question dddd"));
        assert!(spec.token_estimate <= tight.max_context_tokens - tight.max_decode_tokens);
    }

    #[test]
    fn oversized_query_is_a_budget_error() {
        let bank = bank_of(&[("a", "question a", "target a")]);
        let selection = selection_of(&[("a", 0.9)]);
        let q = query(&"long ".repeat(500));
        let params = DecodingParams {
            max_context_tokens: 210,
            ..DecodingParams::default()
        };
        assert!(matches!(
            assemble_prompt(&selection, &bank, &q, &params),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn schema_line_is_dropped_when_absent() {
        let template = PromptTemplate::for_task("text_to_sql");
        let with = PromptTemplate::render_block(
            &template.example_block,
            "q",
            Some("t1 [c1, c2]"),
            Some("SELECT 1"),
        );
        assert!(with.contains("Schema: t1 [c1, c2]"));
        let without = PromptTemplate::render_block(&template.example_block, "q", None, Some("SELECT 1"));
        assert!(!without.contains("Schema"));
        assert_eq!(without, "Question: q\nSQL: SELECT 1");
    }

    #[test]
    fn unknown_tags_fall_back_to_default_template() {
        let template = PromptTemplate::for_task("some-new-task");
        assert_eq!(template.stop_label, "Input:");
    }

    #[test]
    fn completion_is_trimmed_at_the_delimiter() {
        let bank = bank_of(&[("a", "question a", "target a")]);
        let selection = selection_of(&[("a", 0.9)]);
        let spec = assemble_prompt(&selection, &bank, &query("q"), &DecodingParams::default()).unwrap();
        assert_eq!(spec.stop_label, "Input:");
        let mock = MockCompletion::new("mock")
            .with_default(" SELECT name FROM t\n\nInput: fabricated next\nOutput: spam");
        let out = complete(&spec, &mock, &DecodingParams::default()).unwrap();
        assert_eq!(out, vec!["SELECT name FROM t"]);
    }

    #[test]
    fn greedy_mock_is_deterministic() {
        let bank = bank_of(&[("a", "question a", "target a")]);
        let selection = selection_of(&[("a", 0.9)]);
        let params = DecodingParams::default();
        let spec = assemble_prompt(&selection, &bank, &query("q"), &params).unwrap();
        let mock = MockCompletion::new("mock").with_default("canned answer");
        let first = complete(&spec, &mock, &params).unwrap();
        let second = complete(&spec, &mock, &params).unwrap();
        assert_eq!(first, second);
        assert_eq!(first, vec!["canned answer"]);
    }

    #[test]
    fn multi_sample_greedy_is_rejected() {
        let params = DecodingParams {
            n_samples: 3,
            ..DecodingParams::default()
        };
        assert!(params.validate().is_err());
        let sampled = DecodingParams {
            n_samples: 3,
            temperature: 0.7,
            ..DecodingParams::default()
        };
        assert!(sampled.validate().is_ok());
    }
}
