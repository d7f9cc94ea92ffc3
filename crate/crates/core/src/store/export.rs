//! JSON-lines and CSV export.
//!
//! `ptm_package` JSON-lines output is itself a valid snapshot: schema fields
//! first, in column order, followed by the preserved extra fields exactly as
//! they were ingested. Re-ingesting an export and exporting again yields the
//! same bytes.

use std::io::Write;
use std::str::FromStr;

use indexmap::IndexMap;
use serde_json::value::RawValue;
use serde_json::Value;

use super::query::Selector;
use super::schema::Table;
use super::{Result, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    JsonLines,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json-lines" | "jsonlines" | "ndjson" => Ok(ExportFormat::JsonLines),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(format!("unknown export format {other:?} (expected jsonl or csv)")),
        }
    }
}

/// Writes the rows selected by `selector` to `out`; returns the row count.
pub fn export_table(
    store: &Store,
    selector: &Selector,
    format: ExportFormat,
    out: &mut dyn Write,
) -> Result<usize> {
    let rows = store.query(selector)?;
    match format {
        ExportFormat::JsonLines if selector.table == Table::PtmPackage && selector.join.is_none() => {
            let mut stmt = store.conn().prepare("SELECT extra FROM ptm_package WHERE id = ?1")?;
            for row in &rows {
                let id = row["id"].as_str().unwrap_or_default();
                let extra: String = stmt.query_row([id], |r| r.get(0))?;
                out.write_all(snapshot_line(row, &extra).as_bytes())?;
                out.write_all(b"\n")?;
            }
        }
        ExportFormat::JsonLines => {
            for row in &rows {
                serde_json::to_writer(&mut *out, row).map_err(std::io::Error::other)?;
                out.write_all(b"\n")?;
            }
        }
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().from_writer(&mut *out);
            let header: Vec<String> = match rows.first() {
                Some(r) => r.keys().cloned().collect(),
                None => {
                    let mut h: Vec<String> =
                        selector.table.columns().iter().map(|c| c.name.to_string()).collect();
                    if let Some(j) = selector.join {
                        h.extend(j.columns().iter().map(|c| format!("{}.{}", j.name(), c.name)));
                    }
                    h
                }
            };
            w.write_record(&header)?;
            for row in &rows {
                w.write_record(row.values().map(csv_cell))?;
            }
            w.flush()?;
        }
    }
    Ok(rows.len())
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn snapshot_line(row: &super::query::Row, extra: &str) -> String {
    let mut line = String::from("{");
    let mut first = true;
    for (k, v) in row.iter().filter(|(k, _)| k.as_str() != "extra") {
        if !first {
            line.push(',');
        }
        first = false;
        line.push_str(&serde_json::to_string(k).expect("key"));
        line.push(':');
        line.push_str(&serde_json::to_string(v).expect("value"));
    }
    let extras: IndexMap<String, Box<RawValue>> = serde_json::from_str(extra).unwrap_or_default();
    for (k, v) in &extras {
        line.push(',');
        line.push_str(&serde_json::to_string(k).expect("key"));
        line.push(':');
        line.push_str(v.get());
    }
    line.push('}');
    line
}
