//! Table layout. Column order here is the field order of every export.

use std::fmt;
use std::str::FromStr;

pub const SCHEMA_VERSION: &str = "1";

pub(crate) const DDL: &str = r#"
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS ptm_package (
    id           TEXT PRIMARY KEY,
    registry     TEXT NOT NULL,
    name         TEXT NOT NULL CHECK (length(name) > 0),
    downloads    INTEGER NOT NULL CHECK (downloads >= 0),
    license_raw  TEXT,
    tags         TEXT NOT NULL,
    card         TEXT,
    created_at   TEXT,
    snapshot_ref TEXT,
    extra        TEXT NOT NULL,
    UNIQUE (registry, name)
);
CREATE TABLE IF NOT EXISTS repository (
    id             TEXT PRIMARY KEY,
    host           TEXT NOT NULL,
    full_name      TEXT NOT NULL UNIQUE,
    stars          INTEGER NOT NULL CHECK (stars >= 0),
    license_raw    TEXT,
    scanned_commit TEXT
);
CREATE TABLE IF NOT EXISTS scan_result (
    repo_id           TEXT PRIMARY KEY REFERENCES repository(id),
    files_seen        INTEGER NOT NULL,
    files_prefiltered INTEGER NOT NULL,
    files_parsed      INTEGER NOT NULL,
    record_count      INTEGER NOT NULL,
    skipped           TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS usage_record (
    id           TEXT PRIMARY KEY,
    repo_id      TEXT NOT NULL REFERENCES repository(id),
    file         TEXT NOT NULL,
    line         INTEGER NOT NULL CHECK (line >= 1),
    signature_id TEXT NOT NULL,
    library      TEXT NOT NULL,
    hub          TEXT NOT NULL,
    model_name   TEXT
);
CREATE TABLE IF NOT EXISTS ptm_app_link (
    repo_id        TEXT NOT NULL REFERENCES repository(id),
    ptm_id         TEXT NOT NULL REFERENCES ptm_package(id),
    match_strength TEXT NOT NULL,
    evidence       TEXT NOT NULL CHECK (evidence <> '[]'),
    PRIMARY KEY (repo_id, ptm_id)
);
CREATE TABLE IF NOT EXISTS unmatched_name (
    repo_id  TEXT NOT NULL REFERENCES repository(id),
    hub      TEXT NOT NULL,
    name     TEXT NOT NULL,
    evidence TEXT NOT NULL,
    PRIMARY KEY (repo_id, hub, name)
);
CREATE TABLE IF NOT EXISTS extracted_metadata (
    ptm_id       TEXT PRIMARY KEY REFERENCES ptm_package(id),
    mode         TEXT NOT NULL,
    client_id    TEXT NOT NULL,
    timestamp    TEXT NOT NULL,
    input_digest TEXT NOT NULL,
    review       TEXT NOT NULL,
    fields       TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS ptm_ptm_link (
    child_ptm_id     TEXT NOT NULL REFERENCES ptm_package(id),
    base_model_name  TEXT NOT NULL CHECK (length(base_model_name) > 0),
    resolved_base_id TEXT REFERENCES ptm_package(id),
    PRIMARY KEY (child_ptm_id, base_model_name),
    CHECK (resolved_base_id IS NULL OR resolved_base_id <> child_ptm_id)
);
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Integer,
    /// JSON document stored as text, exported inline.
    Json,
}

#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub ty: ColumnType,
}

use ColumnType::{Integer, Json, Text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    PtmPackage,
    Repository,
    ScanResult,
    UsageRecord,
    PtmAppLink,
    UnmatchedName,
    ExtractedMetadata,
    PtmPtmLink,
}

impl Table {
    pub const ALL: [Table; 8] = [
        Table::PtmPackage,
        Table::Repository,
        Table::ScanResult,
        Table::UsageRecord,
        Table::PtmAppLink,
        Table::UnmatchedName,
        Table::ExtractedMetadata,
        Table::PtmPtmLink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::PtmPackage => "ptm_package",
            Table::Repository => "repository",
            Table::ScanResult => "scan_result",
            Table::UsageRecord => "usage_record",
            Table::PtmAppLink => "ptm_app_link",
            Table::UnmatchedName => "unmatched_name",
            Table::ExtractedMetadata => "extracted_metadata",
            Table::PtmPtmLink => "ptm_ptm_link",
        }
    }

    pub fn columns(self) -> &'static [Column] {
        match self {
            Table::PtmPackage => &[
                Column { name: "id", ty: Text },
                Column { name: "registry", ty: Text },
                Column { name: "name", ty: Text },
                Column { name: "downloads", ty: Integer },
                Column { name: "license_raw", ty: Text },
                Column { name: "tags", ty: Json },
                Column { name: "card", ty: Text },
                Column { name: "created_at", ty: Text },
                Column { name: "snapshot_ref", ty: Text },
                Column { name: "extra", ty: Json },
            ],
            Table::Repository => &[
                Column { name: "id", ty: Text },
                Column { name: "host", ty: Text },
                Column { name: "full_name", ty: Text },
                Column { name: "stars", ty: Integer },
                Column { name: "license_raw", ty: Text },
                Column { name: "scanned_commit", ty: Text },
            ],
            Table::ScanResult => &[
                Column { name: "repo_id", ty: Text },
                Column { name: "files_seen", ty: Integer },
                Column { name: "files_prefiltered", ty: Integer },
                Column { name: "files_parsed", ty: Integer },
                Column { name: "record_count", ty: Integer },
                Column { name: "skipped", ty: Json },
            ],
            Table::UsageRecord => &[
                Column { name: "id", ty: Text },
                Column { name: "repo_id", ty: Text },
                Column { name: "file", ty: Text },
                Column { name: "line", ty: Integer },
                Column { name: "signature_id", ty: Text },
                Column { name: "library", ty: Text },
                Column { name: "hub", ty: Text },
                Column { name: "model_name", ty: Text },
            ],
            Table::PtmAppLink => &[
                Column { name: "repo_id", ty: Text },
                Column { name: "ptm_id", ty: Text },
                Column { name: "match_strength", ty: Text },
                Column { name: "evidence", ty: Json },
            ],
            Table::UnmatchedName => &[
                Column { name: "repo_id", ty: Text },
                Column { name: "hub", ty: Text },
                Column { name: "name", ty: Text },
                Column { name: "evidence", ty: Json },
            ],
            Table::ExtractedMetadata => &[
                Column { name: "ptm_id", ty: Text },
                Column { name: "mode", ty: Text },
                Column { name: "client_id", ty: Text },
                Column { name: "timestamp", ty: Text },
                Column { name: "input_digest", ty: Text },
                Column { name: "review", ty: Json },
                Column { name: "fields", ty: Json },
            ],
            Table::PtmPtmLink => &[
                Column { name: "child_ptm_id", ty: Text },
                Column { name: "base_model_name", ty: Text },
                Column { name: "resolved_base_id", ty: Text },
            ],
        }
    }

    /// Primary-key columns; rows are always returned in this order.
    pub fn key(self) -> &'static [&'static str] {
        match self {
            Table::PtmPackage | Table::Repository | Table::UsageRecord => &["id"],
            Table::ScanResult => &["repo_id"],
            Table::PtmAppLink => &["repo_id", "ptm_id"],
            Table::UnmatchedName => &["repo_id", "hub", "name"],
            Table::ExtractedMetadata => &["ptm_id"],
            Table::PtmPtmLink => &["child_ptm_id", "base_model_name"],
        }
    }

    pub fn column(self, name: &str) -> Option<Column> {
        self.columns().iter().copied().find(|c| c.name == name)
    }

    /// Join condition `(left column, right column)` for supported joins.
    pub fn join_on(self, other: Table) -> Option<(&'static str, &'static str)> {
        match (self, other) {
            (Table::PtmAppLink, Table::Repository)
            | (Table::UsageRecord, Table::Repository)
            | (Table::ScanResult, Table::Repository)
            | (Table::UnmatchedName, Table::Repository) => Some(("repo_id", "id")),
            (Table::PtmAppLink, Table::PtmPackage) | (Table::ExtractedMetadata, Table::PtmPackage) => {
                Some(("ptm_id", "id"))
            }
            (Table::PtmPtmLink, Table::PtmPackage) => Some(("child_ptm_id", "id")),
            _ => None,
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Table {
    type Err = String;

    /// Accepts `ptm_app_link`, `PtmAppLink` and `ptm-app-link`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Table::ALL
            .into_iter()
            .find(|t| t.name().replace('_', "") == key)
            .ok_or_else(|| format!("unknown table {s:?}"))
    }
}
