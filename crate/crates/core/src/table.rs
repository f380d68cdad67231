//! Minimal tabular text helpers shared by the file readers and the report writer.
//!
//! Tables are comma-separated with a header row. Lines starting with `#` are
//! comments; a comment of the form `# key = value` is kept as metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{RevsError, Result};

#[derive(Debug, Clone, Default)]
pub(crate) struct Table {
    pub meta: BTreeMap<String, String>,
    pub headers: Vec<String>,
    /// Data rows with their 1-based line numbers in the source text.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| RevsError::io(path, e))?;
        Self::parse(&text).map_err(|msg| RevsError::parse(path, msg))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut table = Table::default();
        let mut body = String::new();
        let mut line_numbers = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    table
                        .meta
                        .insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            body.push_str(line);
            body.push('\n');
            line_numbers.push(idx + 1);
        }

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        table.headers = reader
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(str::to_string)
            .collect();
        if table.headers.is_empty() {
            return Err("missing header row".into());
        }
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let line = line_numbers.get(i + 1).copied().unwrap_or(0);
            table
                .rows
                .push((line, record.iter().map(str::to_string).collect()));
        }
        Ok(table)
    }
}

pub(crate) fn field(row: &[String], idx: usize, line: usize) -> std::result::Result<&str, String> {
    match row.get(idx) {
        Some(s) if !s.is_empty() => Ok(s.as_str()),
        _ => Err(format!("line {line}: missing value in column {}", idx + 1)),
    }
}

pub(crate) fn parse_f64(row: &[String], idx: usize, line: usize) -> std::result::Result<f64, String> {
    let s = field(row, idx, line)?;
    let v: f64 = s
        .parse()
        .map_err(|_| format!("line {line}: '{s}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("line {line}: '{s}' is not finite"));
    }
    Ok(v)
}

pub(crate) fn parse_usize(row: &[String], idx: usize, line: usize) -> std::result::Result<usize, String> {
    let s = field(row, idx, line)?;
    s.parse()
        .map_err(|_| format!("line {line}: '{s}' is not a non-negative integer"))
}

/// Writes `contents` to `path`, creating parent directories.
pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| RevsError::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| RevsError::io(path, e))
}
