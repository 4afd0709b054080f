use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// A relational table: one header row plus a row-major cell grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct Table {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct RawTable {
    #[serde(default)]
    id: Option<Value>,
    headers: Vec<Value>,
    #[serde(default)]
    rows: Vec<Vec<Value>>,
}

fn cell_text(v: Value) -> String {
    match v {
        Value::String(s) => s,
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

impl TryFrom<RawTable> for Table {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        Table::new(
            raw.id.map(cell_text).unwrap_or_default(),
            raw.headers.into_iter().map(cell_text).collect(),
            raw.rows
                .into_iter()
                .map(|r| r.into_iter().map(cell_text).collect())
                .collect(),
        )
    }
}

impl Table {
    pub fn new(id: impl Into<String>, headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if headers.is_empty() {
            return Err(Error::input("table has no headers"));
        }
        if let Some((i, row)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != headers.len())
        {
            return Err(Error::input(format!(
                "row {i} has {} cells, expected {}",
                row.len(),
                headers.len()
            )));
        }
        Ok(Table {
            id: id.into(),
            headers,
            rows,
        })
    }

    /// Parses `{"headers": [...], "rows": [[...], ...]}`. Non-string cells are
    /// stringified; `null` becomes an empty cell.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawTable = serde_json::from_str(s).map_err(|e| Error::parse(Some(e.line()), e.to_string()))?;
        Table::try_from(raw).map_err(|e| Error::parse(None, e.to_string()))
    }

    /// Parses CSV whose first record is the header row.
    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(s.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(&e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&e))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Table::new("", headers, rows).map_err(|e| Error::parse(None, e.to_string()))
    }

    /// Headers followed by every cell, row-major.
    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.headers
            .iter()
            .chain(self.rows.iter().flatten())
            .map(String::as_str)
    }

    /// Pipe-delimited rendering used in prompts.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        out.push_str(&line(&self.headers));
        out.push_str(&format!("|{}\n", " --- |".repeat(self.headers.len())));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::parse(line, e.to_string())
}
