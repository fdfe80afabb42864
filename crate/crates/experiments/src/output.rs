//! CSV and JSON emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Rows of plain cells for CSV output.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// A command result: a table for CSV, a document for JSON, and an optional
/// summary written after the CSV (or to a `.summary.json` file beside it).
pub struct Report<T: Serialize, S: Serialize> {
    pub table: Table,
    pub document: T,
    pub summary: Option<S>,
}

impl<T: Serialize, S: Serialize> Report<T, S> {
    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<()> {
        match format {
            Format::Json => {
                let mut text = serde_json::to_string_pretty(&self.document)?;
                text.push('\n');
                write_text(out, &text)
            }
            Format::Csv => {
                let mut text = self.table.to_csv()?;
                let summary = match &self.summary {
                    Some(s) => Some(serde_json::to_string(s)?),
                    None => None,
                };
                match (out, summary) {
                    (Some(path), Some(s)) => {
                        write_text(Some(path), &text)?;
                        write_text(Some(&sidecar_path(path)), &(s + "\n"))
                    }
                    (None, Some(s)) => {
                        text.push_str("# ");
                        text.push_str(&s);
                        text.push('\n');
                        write_text(None, &text)
                    }
                    (_, None) => write_text(out, &text),
                }
            }
        }
    }
}

/// `results.csv` → `results.summary.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("summary.json")
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}
