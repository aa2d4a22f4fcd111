//! Scoring: exact match on normalized logical forms, sketch overlap,
//! recall@N by frequency re-ranking, and the selection-behavior statistics
//! (database diversity, schema/target complexity).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::{Example, ExampleBank};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::selector::{sketch_similarity, SelectionResult};

/// One scored prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    pub prediction: String,
    pub target: String,
    pub exact_match: bool,
    pub sketch_overlap: usize,
    pub selected_ids: Vec<String>,
}

/// Aggregate metrics over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub exact_match_rate: f64,
    pub mean_sketch_overlap: f64,
    pub diversity_mean_distinct_dbs: f64,
    pub complexity_mean_tables: f64,
    pub complexity_mean_target_len: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_trial_rates: Option<Vec<f64>>,
}

/// A backbone prediction for one query (and trial, for random baselines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    pub prediction: String,
}

/// Canonical form for logical-form comparison: collapse whitespace runs,
/// drop spaces that touch punctuation so bracketing style cannot fail a
/// match, strip trailing semicolons. Case is preserved.
pub fn normalize_logical_form(s: &str) -> String {
    let collapsed: Vec<char> = s.split_whitespace().collect::<Vec<_>>().join(" ").chars().collect();
    let mut out = String::with_capacity(collapsed.len());
    for (i, &c) in collapsed.iter().enumerate() {
        if c == ' ' {
            let prev_alnum = i > 0 && collapsed[i - 1].is_alphanumeric();
            let next_alnum = i + 1 < collapsed.len() && collapsed[i + 1].is_alphanumeric();
            if !(prev_alnum && next_alnum) {
                continue;
            }
        }
        out.push(c);
    }
    while out.ends_with(';') {
        out.pop();
    }
    out.trim().to_string()
}

/// Equality of normalized logical forms.
pub fn exact_match(pred: &str, target: &str) -> bool {
    normalize_logical_form(pred) == normalize_logical_form(target)
}

/// Rank sampled outputs by frequency of their normalized form (ties by
/// first occurrence) and report whether any of the top n matches the target.
pub fn recall_at_n(samples: &[String], n: usize, target: &str) -> bool {
    if samples.is_empty() || n == 0 {
        return false;
    }
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for sample in samples {
        let normalized = normalize_logical_form(sample);
        if !counts.contains_key(&normalized) {
            order.push(normalized.clone());
        }
        *counts.entry(normalized).or_insert(0) += 1;
    }
    let mut groups: Vec<(usize, &String)> = order.iter().enumerate().collect();
    groups.sort_by(|a, b| counts[b.1].cmp(&counts[a.1]).then(a.0.cmp(&b.0)));
    let target_form = normalize_logical_form(target);
    groups.iter().take(n).any(|(_, form)| **form == target_form)
}

/// Number of distinct databases among selected examples. Examples without a
/// db id share one pseudo-database.
pub fn diversity_distinct_dbs(selected: &[&Example]) -> usize {
    selected
        .iter()
        .map(|ex| ex.db_key())
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}

/// Mean table count and mean whitespace-token target length over selected
/// examples. Empty db ids contribute zero tables; unknown ones are an error.
pub fn complexity_stats(
    selected: &[&Example],
    schemas: &HashMap<String, usize>,
) -> Result<(f64, f64)> {
    if selected.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut tables = 0usize;
    let mut tokens = 0usize;
    for ex in selected {
        let db = ex.db_key();
        if !db.is_empty() {
            tables += *schemas.get(db).ok_or_else(|| Error::MissingData {
                id: db.to_string(),
                message: "db_id has no table count".into(),
            })?;
        }
        tokens += ex.target.split_whitespace().count();
    }
    let n = selected.len() as f64;
    Ok((tables as f64 / n, tokens as f64 / n))
}

/// Table counts per database, derived from each example's stored schema:
/// one table per non-empty schema line, keeping the largest count seen.
pub fn bank_table_counts(bank: &ExampleBank) -> HashMap<String, usize> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for ex in bank.examples() {
        let db = ex.db_key();
        if db.is_empty() {
            continue;
        }
        let tables = ex
            .schema
            .as_deref()
            .map(|s| s.lines().filter(|line| !line.trim().is_empty()).count())
            .unwrap_or(0);
        let entry = counts.entry(db.to_string()).or_insert(0);
        *entry = (*entry).max(tables);
    }
    counts
}

/// Join predictions, gold queries, and selections, then score everything.
/// The selections drive the join: each one must find its query and its
/// prediction. Returns the per-record rows plus the aggregate report.
pub fn evaluate_records(
    predictions: &[PredictionRecord],
    queries: &[Example],
    selections: &[SelectionResult],
    bank: &ExampleBank,
) -> Result<(Vec<EvalRecord>, EvalReport)> {
    if selections.is_empty() {
        return Err(Error::Validation("no selections to evaluate".into()));
    }
    let query_by_id: HashMap<&str, &Example> =
        queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let prediction_by_key: HashMap<(&str, Option<usize>), &PredictionRecord> = predictions
        .iter()
        .map(|p| ((p.query_id.as_str(), p.trial), p))
        .collect();
    let schemas = bank_table_counts(bank);

    let mut records = Vec::with_capacity(selections.len());
    let mut diversity_sum = 0.0;
    let mut tables_sum = 0.0;
    let mut target_len_sum = 0.0;
    let mut sketch_sum = 0.0;
    for selection in selections {
        let query = query_by_id
            .get(selection.query_id.as_str())
            .ok_or_else(|| Error::Join {
                id: selection.query_id.clone(),
                input: "queries".into(),
            })?;
        let prediction = prediction_by_key
            .get(&(selection.query_id.as_str(), selection.trial))
            .ok_or_else(|| Error::Join {
                id: selection.query_id.clone(),
                input: "predictions".into(),
            })?;
        let selected: Vec<&Example> = selection
            .ranked
            .iter()
            .map(|s| {
                bank.get(&s.example_id).ok_or_else(|| Error::Join {
                    id: s.example_id.clone(),
                    input: "bank".into(),
                })
            })
            .collect::<Result<_>>()?;

        let matched = exact_match(&prediction.prediction, &query.target);
        let overlap = sketch_similarity(&prediction.prediction, &query.target);
        let (mean_tables, mean_target_len) = complexity_stats(&selected, &schemas)?;
        diversity_sum += diversity_distinct_dbs(&selected) as f64;
        tables_sum += mean_tables;
        target_len_sum += mean_target_len;
        sketch_sum += overlap as f64;
        records.push(EvalRecord {
            query_id: selection.query_id.clone(),
            trial: selection.trial,
            prediction: prediction.prediction.clone(),
            target: query.target.clone(),
            exact_match: matched,
            sketch_overlap: overlap,
            selected_ids: selection.ranked.iter().map(|s| s.example_id.clone()).collect(),
        });
    }

    let n = records.len();
    let matches = records.iter().filter(|r| r.exact_match).count();
    let per_trial_rates = per_trial_rates(&records);
    let report = EvalReport {
        n,
        exact_match_rate: matches as f64 / n as f64,
        mean_sketch_overlap: sketch_sum / n as f64,
        diversity_mean_distinct_dbs: diversity_sum / n as f64,
        complexity_mean_tables: tables_sum / n as f64,
        complexity_mean_target_len: target_len_sum / n as f64,
        per_trial_rates,
    };
    Ok((records, report))
}

fn per_trial_rates(records: &[EvalRecord]) -> Option<Vec<f64>> {
    let mut trials: Vec<usize> = records.iter().filter_map(|r| r.trial).collect();
    if trials.is_empty() {
        return None;
    }
    trials.sort_unstable();
    trials.dedup();
    let rates = trials
        .iter()
        .map(|t| {
            let of_trial: Vec<&EvalRecord> =
                records.iter().filter(|r| r.trial == Some(*t)).collect();
            let matched = of_trial.iter().filter(|r| r.exact_match).count();
            matched as f64 / of_trial.len() as f64
        })
        .collect();
    Some(rates)
}

/// File-based wrapper over [`evaluate_records`]: reads the three JSONL
/// inputs, writes per-record rows next to nothing (caller picks the path),
/// and returns the report.
pub fn evaluate_run(
    predictions_path: &Path,
    queries_path: &Path,
    selections_path: &Path,
    bank: &ExampleBank,
    records_out: Option<&Path>,
) -> Result<EvalReport> {
    let predictions: Vec<PredictionRecord> = jsonl::read_records(predictions_path)?;
    let queries: Vec<Example> = jsonl::read_records(queries_path)?;
    let selections: Vec<SelectionResult> = jsonl::read_records(selections_path)?;
    let (records, report) = evaluate_records(&predictions, &queries, &selections, bank)?;
    if let Some(path) = records_out {
        jsonl::write_records(path, &records)?;
    }
    Ok(report)
}

/// Write predictions in the two-column db-id/SQL layout the external
/// execution-accuracy scripts consume.
pub fn export_predictions_tsv(
    predictions: &[PredictionRecord],
    queries: &[Example],
    path: &Path,
) -> Result<()> {
    let query_by_id: HashMap<&str, &Example> =
        queries.iter().map(|q| (q.id.as_str(), q)).collect();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for prediction in predictions {
        let query = query_by_id
            .get(prediction.query_id.as_str())
            .ok_or_else(|| Error::Join {
                id: prediction.query_id.clone(),
                input: "queries".into(),
            })?;
        let flat = prediction.prediction.split_whitespace().collect::<Vec<_>>().join(" ");
        writeln!(file, "{}\t{}", query.db_key(), flat).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
