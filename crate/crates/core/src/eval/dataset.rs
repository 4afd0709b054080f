use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::Query;

/// Parses `{id, table, question, answer}` JSONL. Blank lines are skipped.
pub fn parse_dataset(s: &str) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut q: Query = serde_json::from_str(line).map_err(|e| Error::parse(Some(i + 1), e.to_string()))?;
        if q.table.id.is_empty() {
            q.table.id = q.id.clone();
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&s)
}
