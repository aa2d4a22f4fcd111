//! Example banks: loading, validation, and persistence.
//!
//! A bank is an ordered pool of input-output examples stored as
//! line-delimited JSON records. Iteration order is the ingestion order and
//! survives save/load round-trips. Banks are immutable after load; building
//! a changed bank means constructing a new one.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// One bank entry: an input query paired with its ground-truth logical form.
///
/// `schema` holds whatever serialized database schema ingestion provided
/// (one `table [column, ...]` line per table for SQL tasks); it is stored
/// verbatim and never re-serialized. `db_id` identifies the source database
/// and may be empty for tasks without databases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db_id: Option<String>,
}

impl Example {
    /// The database identifier, with the empty string standing in for
    /// examples that have none (they share a single pseudo-database).
    pub fn db_key(&self) -> &str {
        self.db_id.as_deref().unwrap_or("")
    }
}

/// A test input query. Unlike [`Example`] it carries no target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryInput {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
}

impl From<&Example> for QueryInput {
    fn from(example: &Example) -> Self {
        QueryInput {
            id: example.id.clone(),
            question: example.question.clone(),
            schema: example.schema.clone(),
        }
    }
}

/// An ordered, id-unique collection of examples for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBank {
    examples: Vec<Example>,
    index: HashMap<String, usize>,
    pub task_tag: String,
}

impl ExampleBank {
    /// Build a bank, validating id uniqueness and non-empty questions and
    /// targets.
    pub fn new(examples: Vec<Example>, task_tag: impl Into<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(examples.len());
        for (pos, example) in examples.iter().enumerate() {
            if example.question.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "example {:?} has an empty question",
                    example.id
                )));
            }
            if example.target.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "example {:?} has an empty target",
                    example.id
                )));
            }
            if index.insert(example.id.clone(), pos).is_some() {
                return Err(Error::DuplicateId {
                    id: example.id.clone(),
                });
            }
        }
        Ok(ExampleBank {
            examples,
            index,
            task_tag: task_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples in ingestion order.
    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.index.get(id).map(|&pos| &self.examples[pos])
    }

    /// Position of an id in ingestion order (the tie-break index used by
    /// every selection strategy).
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Distinct database count over the whole bank, empty `db_id` counting
    /// as one shared pseudo-database.
    pub fn distinct_dbs(&self) -> usize {
        let mut seen: Vec<&str> = self.examples.iter().map(|e| e.db_key()).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Load a bank from a line-delimited record file, preserving file order.
pub fn load_bank(path: &Path, task_tag: &str) -> Result<ExampleBank> {
    let examples: Vec<Example> = jsonl::read_records(path)?;
    ExampleBank::new(examples, task_tag)
}

/// Persist a bank so that `load_bank` reproduces it field-for-field.
pub fn save_bank(bank: &ExampleBank, path: &Path) -> Result<()> {
    jsonl::write_records(path, bank.examples())
}

/// Collapse internal whitespace runs to single spaces and trim the ends.
pub(crate) fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Common face of bank examples and incoming queries: anything with an id,
/// a question, and maybe a schema can be embedded or rewritten.
pub trait HasQuestion {
    fn id(&self) -> &str;
    fn question(&self) -> &str;
    fn schema(&self) -> Option<&str>;
}

impl HasQuestion for Example {
    fn id(&self) -> &str {
        &self.id
    }

    fn question(&self) -> &str {
        &self.question
    }

    fn schema(&self) -> Option<&str> {
        self.schema.as_deref()
    }
}

impl HasQuestion for QueryInput {
    fn id(&self) -> &str {
        &self.id
    }

    fn question(&self) -> &str {
        &self.question
    }

    fn schema(&self) -> Option<&str> {
        self.schema.as_deref()
    }
}

/// The text fed to the embedding model for an example or query: the question
/// only, whitespace-normalized. Schemas are excluded; they carry redundant
/// detail that drowns the question signal.
pub fn embedding_text_of<T: HasQuestion>(x: &T) -> String {
    normalize_whitespace(x.question())
}
