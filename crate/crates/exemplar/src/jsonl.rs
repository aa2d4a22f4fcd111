//! Line-delimited JSON record files.
//!
//! All on-disk artifacts (banks, demonstrations, skills, selections,
//! predictions, caches) share this format: one JSON object per line, UTF-8,
//! blank lines skipped. Parse errors carry the 1-based line number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Read every record from a line-delimited JSON file, skipping blank lines.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

/// Parse records from an in-memory string (used for data files shipped in
/// the binary). Blank lines are skipped; errors carry the line number.
pub fn parse_records<T: DeserializeOwned>(source: &str, origin: &str) -> Result<Vec<T>> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, idx + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

/// Write records as one JSON object per line.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Validation(format!("serialization failed: {e}")))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
