//! Candidate I/O format: plain text, one record per line, comma-separated
//! decimal floating-point values.

use std::fmt::Write as _;

use thiserror::Error;

pub type Table = Vec<Vec<f64>>;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}, column {column}: cannot parse `{token}` as a number")]
pub struct TableParseError {
    pub line: usize,
    pub column: usize,
    pub token: String,
}

/// Parses a table; blank lines are skipped and fields may be padded with
/// whitespace.
pub fn parse_table(text: &str) -> Result<Table, TableParseError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, tok)| {
                let tok = tok.trim();
                tok.parse::<f64>().map_err(|_| TableParseError {
                    line: idx + 1,
                    column: col + 1,
                    token: tok.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Formats values with the shortest representation that parses back to
/// the same `f64`.
pub fn format_table(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}
