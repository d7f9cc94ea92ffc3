//! Snapshot ingestion (newline-delimited JSON objects).
//!
//! Schema fields are parsed into columns. Everything else is kept verbatim in
//! the `extra` blob so that an export reproduces it byte for byte.

use std::io::BufRead;

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::value::RawValue;

use super::{upsert_package, upsert_repository, Result, Store};
use crate::model::{parse_timestamp, PtmId, PtmPackage, Registry, RepoId, Repository};

const PACKAGE_FIELDS: &[&str] = &[
    "id",
    "name",
    "registry",
    "downloads",
    "license_raw",
    "tags",
    "card",
    "created_at",
    "snapshot_ref",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestError {
    /// 1-based line number in the snapshot.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub loaded: usize,
    pub errors: Vec<IngestError>,
}

type RawObject = IndexMap<String, Box<RawValue>>;

fn field<'de, T: Deserialize<'de>>(obj: &'de RawObject, key: &str) -> Result<Option<T>, String> {
    match obj.get(key) {
        None => Ok(None),
        Some(raw) => serde_json::from_str::<Option<T>>(raw.get())
            .map_err(|e| format!("field {key:?}: {e}")),
    }
}

pub(crate) fn raw_object_text<'a>(entries: impl Iterator<Item = (&'a String, &'a Box<RawValue>)>) -> String {
    let mut out = String::from("{");
    for (i, (k, v)) in entries.enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&serde_json::to_string(k).expect("string serializes"));
        out.push(':');
        out.push_str(v.get());
    }
    out.push('}');
    out
}

fn parse_package(line: &str) -> Result<PtmPackage, String> {
    let obj: RawObject =
        serde_json::from_str(line).map_err(|e| format!("not a JSON object: {e}"))?;
    let name: String = field(&obj, "name")?.ok_or("missing required field \"name\"")?;
    if name.trim().is_empty() {
        return Err("field \"name\" is empty".into());
    }
    let registry: String = field(&obj, "registry")?.ok_or("missing required field \"registry\"")?;
    let registry: Registry = registry.parse().map_err(|e| format!("{e}"))?;
    let downloads: Option<i64> = field(&obj, "downloads")?;
    let downloads = match downloads {
        Some(d) if d < 0 => return Err(format!("field \"downloads\" must be non-negative, got {d}")),
        Some(d) => d as u64,
        None => 0,
    };
    let created_at = match field::<String>(&obj, "created_at")? {
        Some(text) => Some(
            parse_timestamp(&text).ok_or_else(|| format!("field \"created_at\": bad timestamp {text:?}"))?,
        ),
        None => None,
    };
    let extra = raw_object_text(obj.iter().filter(|(k, _)| !PACKAGE_FIELDS.contains(&k.as_str())));
    Ok(PtmPackage {
        id: PtmId::for_package(registry, &name),
        registry,
        name,
        downloads,
        license_raw: field(&obj, "license_raw")?,
        tags: field(&obj, "tags")?.unwrap_or_default(),
        card: field(&obj, "card")?,
        created_at,
        snapshot_ref: field(&obj, "snapshot_ref")?,
        extra,
    })
}

fn parse_repository(line: &str) -> Result<Repository, String> {
    let obj: RawObject =
        serde_json::from_str(line).map_err(|e| format!("not a JSON object: {e}"))?;
    let full_name: String =
        field(&obj, "full_name")?.ok_or("missing required field \"full_name\"")?;
    let host: String = field(&obj, "host")?.unwrap_or_else(|| "github".to_string());
    let stars: Option<i64> = field(&obj, "stars")?;
    let stars = match stars {
        Some(s) if s < 0 => return Err(format!("field \"stars\" must be non-negative, got {s}")),
        Some(s) => s as u64,
        None => 0,
    };
    let mut repo = Repository::new(host, full_name).map_err(|e| e.to_string())?;
    repo.stars = stars;
    repo.license_raw = field(&obj, "license_raw")?;
    repo.scanned_commit = field(&obj, "scanned_commit")?;
    debug_assert_eq!(repo.id, RepoId::for_repo(&repo.host, &repo.full_name));
    Ok(repo)
}

impl Store {
    /// Loads a registry snapshot. Malformed records are skipped and reported;
    /// a record whose `(registry, name)` already exists replaces it.
    pub fn ingest_registry_snapshot(&mut self, snapshot: impl BufRead) -> Result<IngestReport> {
        self.ingest_lines(snapshot, parse_package, |conn, pkg| upsert_package(conn, pkg))
    }

    /// Loads repository records (`full_name`, optional `host`, `stars`,
    /// `license_raw`, `scanned_commit`).
    pub fn ingest_repositories(&mut self, records: impl BufRead) -> Result<IngestReport> {
        self.ingest_lines(records, parse_repository, |conn, repo| {
            upsert_repository(conn, repo)
        })
    }

    fn ingest_lines<T>(
        &mut self,
        input: impl BufRead,
        parse: fn(&str) -> Result<T, String>,
        write: impl Fn(&rusqlite::Connection, &T) -> Result<()>,
    ) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        let tx = self.conn.transaction()?;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            match parse(text) {
                Ok(item) => {
                    write(&tx, &item)?;
                    report.loaded += 1;
                }
                Err(message) => {
                    log::warn!("snapshot line {}: {message}", idx + 1);
                    report.errors.push(IngestError {
                        line: idx + 1,
                        message,
                    });
                }
            }
        }
        tx.commit()?;
        Ok(report)
    }
}
