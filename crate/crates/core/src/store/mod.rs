//! Embedded relational store (SQLite) for packages, repositories, scan results,
//! dependency links and extracted metadata.
//!
//! A store lives in a directory; the database file is [`DB_FILE`] inside it.
//! One [`Store`] opened read-write is the single writer; any number of
//! read-only handles may be opened alongside it.

mod export;
mod ingest;
mod query;
pub mod schema;

use std::path::{Path, PathBuf};

use rusqlite::{params, Connection, OpenFlags, OptionalExtension};

use crate::model::{
    format_timestamp, parse_timestamp, MatchStrength, ModelName, PtmAppLink, PtmId, PtmPackage,
    PtmPtmLink, Registry, RepoId, Repository, UsageRecord,
};
use crate::scanner::{RepoScanResult, SkippedFile};

pub use export::{export_table, ExportFormat};
pub use ingest::{IngestError, IngestReport};
pub use query::{CmpOp, Predicate, QueryError, Row, Selector};
pub use schema::{Table, SCHEMA_VERSION};

pub const DB_FILE: &str = "ptmscope.sqlite";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store location {path} is not writable: {reason}")]
    Unwritable { path: PathBuf, reason: String },
    #[error("store at {path} has schema version {found}, expected {expected}")]
    SchemaMismatch {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("no store found at {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    Sql(#[from] rusqlite::Error),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("corrupt {table} row: {reason}")]
    Corrupt { table: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// A usage record as persisted, with its stable id and owning repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredUsage {
    pub id: String,
    pub repo_id: RepoId,
    pub record: UsageRecord,
}

/// A model name found in scanned code that matched no ingested package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmatchedName {
    pub repo_id: RepoId,
    pub hub: Registry,
    pub name: String,
    pub evidence: Vec<String>,
}

/// Extracted card metadata in its stored form.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredMetadata {
    pub ptm_id: PtmId,
    pub mode: String,
    pub client_id: String,
    pub timestamp: String,
    pub input_digest: String,
    pub review: serde_json::Value,
    pub fields: serde_json::Value,
}

pub struct Store {
    conn: Connection,
    root: PathBuf,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

impl Store {
    /// Opens (creating if needed) the store in directory `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Store> {
        let root = path.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| StoreError::Unwritable {
            path: root.clone(),
            reason: e.to_string(),
        })?;
        let conn = Connection::open(root.join(DB_FILE)).map_err(|e| StoreError::Unwritable {
            path: root.clone(),
            reason: e.to_string(),
        })?;
        conn.pragma_update(None, "foreign_keys", true)?;
        let store = Store { conn, root };
        store.check_version()?;
        store
            .conn
            .execute_batch(schema::DDL)
            .map_err(|e| match e {
                rusqlite::Error::SqliteFailure(ref code, _)
                    if code.code == rusqlite::ErrorCode::ReadOnly
                        || code.code == rusqlite::ErrorCode::CannotOpen =>
                {
                    StoreError::Unwritable {
                        path: store.root.clone(),
                        reason: e.to_string(),
                    }
                }
                other => StoreError::Sql(other),
            })?;
        store.conn.execute(
            "INSERT OR IGNORE INTO meta(key, value) VALUES ('schema_version', ?1)",
            [SCHEMA_VERSION],
        )?;
        Ok(store)
    }

    /// Opens an existing store for reading only.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Store> {
        let root = path.as_ref().to_path_buf();
        let file = root.join(DB_FILE);
        if !file.is_file() {
            return Err(StoreError::Missing(root));
        }
        let conn = Connection::open_with_flags(
            &file,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )?;
        let store = Store { conn, root };
        store.check_version()?;
        Ok(store)
    }

    fn check_version(&self) -> Result<()> {
        let has_meta: bool = self.conn.query_row(
            "SELECT count(*) > 0 FROM sqlite_master WHERE type = 'table' AND name = 'meta'",
            [],
            |r| r.get(0),
        )?;
        if !has_meta {
            return Ok(());
        }
        let found: Option<String> = self
            .conn
            .query_row(
                "SELECT value FROM meta WHERE key = 'schema_version'",
                [],
                |r| r.get(0),
            )
            .optional()?;
        match found {
            Some(v) if v != SCHEMA_VERSION => Err(StoreError::SchemaMismatch {
                path: self.root.clone(),
                found: v,
                expected: SCHEMA_VERSION,
            }),
            _ => Ok(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn count(&self, table: Table) -> Result<usize> {
        let n: i64 = self
            .conn
            .query_row(&format!("SELECT count(*) FROM {}", table.name()), [], |r| r.get(0))?;
        Ok(n as usize)
    }

    pub(crate) fn conn(&self) -> &Connection {
        &self.conn
    }

    // ---- packages ----

    pub fn upsert_package(&mut self, pkg: &PtmPackage) -> Result<()> {
        upsert_package(&self.conn, pkg)
    }

    pub fn packages(&self) -> Result<Vec<PtmPackage>> {
        let mut stmt = self.conn.prepare(
            "SELECT id, registry, name, downloads, license_raw, tags, card, created_at, snapshot_ref, extra
             FROM ptm_package ORDER BY id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, i64>(3)?,
                r.get::<_, Option<String>>(4)?,
                r.get::<_, String>(5)?,
                r.get::<_, Option<String>>(6)?,
                r.get::<_, Option<String>>(7)?,
                r.get::<_, Option<String>>(8)?,
                r.get::<_, String>(9)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (id, registry, name, downloads, license_raw, tags, card, created_at, snapshot_ref, extra) =
                row?;
            let corrupt = |reason: String| StoreError::Corrupt {
                table: "ptm_package",
                reason,
            };
            out.push(PtmPackage {
                id: PtmId(id),
                registry: registry.parse().map_err(|e| corrupt(format!("{e}")))?,
                name,
                downloads: downloads as u64,
                license_raw,
                tags: serde_json::from_str(&tags).map_err(|e| corrupt(e.to_string()))?,
                card,
                created_at: match created_at {
                    Some(t) => Some(parse_timestamp(&t).ok_or_else(|| corrupt(format!("bad timestamp {t}")))?),
                    None => None,
                },
                snapshot_ref,
                extra,
            });
        }
        Ok(out)
    }

    // ---- repositories ----

    /// Inserts or fully replaces a repository row.
    pub fn upsert_repository(&mut self, repo: &Repository) -> Result<()> {
        upsert_repository(&self.conn, repo)
    }

    /// Inserts `repo` unless a row with its id exists; existing rows are kept as-is.
    pub fn register_repository(&mut self, repo: &Repository) -> Result<()> {
        self.conn.execute(
            "INSERT OR IGNORE INTO repository(id, host, full_name, stars, license_raw, scanned_commit)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                repo.id.as_str(),
                repo.host,
                repo.full_name,
                repo.stars as i64,
                repo.license_raw,
                repo.scanned_commit
            ],
        )?;
        Ok(())
    }

    pub fn repositories(&self) -> Result<Vec<Repository>> {
        let mut stmt = self.conn.prepare(
            "SELECT id, host, full_name, stars, license_raw, scanned_commit FROM repository ORDER BY id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok(Repository {
                id: RepoId(r.get(0)?),
                host: r.get(1)?,
                full_name: r.get(2)?,
                stars: r.get::<_, i64>(3)? as u64,
                license_raw: r.get(4)?,
                scanned_commit: r.get(5)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn set_repository_license(&mut self, id: &RepoId, license: Option<&str>) -> Result<()> {
        self.conn.execute(
            "UPDATE repository SET license_raw = ?2 WHERE id = ?1",
            params![id.as_str(), license],
        )?;
        Ok(())
    }

    // ---- scan results ----

    /// Replaces everything previously recorded for the result's repository.
    pub fn replace_scan_result(&mut self, result: &RepoScanResult) -> Result<()> {
        let tx = self.conn.transaction()?;
        write_scan_result(&tx, result)?;
        tx.commit()?;
        Ok(())
    }

    /// Persists many results in one transaction, in the given order.
    pub fn replace_scan_results(&mut self, results: &[RepoScanResult]) -> Result<()> {
        let tx = self.conn.transaction()?;
        for result in results {
            write_scan_result(&tx, result)?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn scan_results(&self) -> Result<Vec<(RepoId, usize, usize, usize, Vec<SkippedFile>)>> {
        let mut stmt = self.conn.prepare(
            "SELECT repo_id, files_seen, files_prefiltered, files_parsed, skipped FROM scan_result ORDER BY repo_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, i64>(1)?,
                r.get::<_, i64>(2)?,
                r.get::<_, i64>(3)?,
                r.get::<_, String>(4)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (repo, seen, pre, parsed, skipped) = row?;
            let skipped: Vec<SkippedFile> =
                serde_json::from_str(&skipped).map_err(|e| StoreError::Corrupt {
                    table: "scan_result",
                    reason: e.to_string(),
                })?;
            out.push((RepoId(repo), seen as usize, pre as usize, parsed as usize, skipped));
        }
        Ok(out)
    }

    pub fn usage_records(&self) -> Result<Vec<StoredUsage>> {
        let mut stmt = self.conn.prepare(
            "SELECT id, repo_id, file, line, signature_id, library, hub, model_name
             FROM usage_record ORDER BY id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, i64>(3)?,
                r.get::<_, String>(4)?,
                r.get::<_, String>(5)?,
                r.get::<_, String>(6)?,
                r.get::<_, Option<String>>(7)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (id, repo_id, file, line, signature_id, library, hub, model_name) = row?;
            out.push(StoredUsage {
                id,
                repo_id: RepoId(repo_id),
                record: UsageRecord {
                    file,
                    line: line as u32,
                    signature_id,
                    model_name: ModelName::from_option(model_name),
                    library,
                    hub: hub.parse().map_err(|e| StoreError::Corrupt {
                        table: "usage_record",
                        reason: format!("{e}"),
                    })?,
                },
            });
        }
        Ok(out)
    }

    // ---- links ----

    /// Replaces all application links and unmatched names.
    pub fn replace_links(&mut self, links: &[PtmAppLink], unmatched: &[UnmatchedName]) -> Result<()> {
        let tx = self.conn.transaction()?;
        tx.execute("DELETE FROM ptm_app_link", [])?;
        tx.execute("DELETE FROM unmatched_name", [])?;
        {
            let mut ins = tx.prepare(
                "INSERT INTO ptm_app_link(repo_id, ptm_id, match_strength, evidence) VALUES (?1, ?2, ?3, ?4)",
            )?;
            for link in links {
                ins.execute(params![
                    link.repo_id.as_str(),
                    link.ptm_id.as_str(),
                    link.match_strength.as_str(),
                    json_text(&link.evidence),
                ])?;
            }
            let mut ins = tx.prepare(
                "INSERT INTO unmatched_name(repo_id, hub, name, evidence) VALUES (?1, ?2, ?3, ?4)",
            )?;
            for u in unmatched {
                ins.execute(params![
                    u.repo_id.as_str(),
                    u.hub.as_str(),
                    u.name,
                    json_text(&u.evidence)
                ])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    /// Inserts one link; referential integrity is checked by the database.
    pub fn insert_link(&mut self, link: &PtmAppLink) -> Result<()> {
        self.conn.execute(
            "INSERT INTO ptm_app_link(repo_id, ptm_id, match_strength, evidence) VALUES (?1, ?2, ?3, ?4)",
            params![
                link.repo_id.as_str(),
                link.ptm_id.as_str(),
                link.match_strength.as_str(),
                json_text(&link.evidence)
            ],
        )?;
        Ok(())
    }

    pub fn links(&self) -> Result<Vec<PtmAppLink>> {
        let mut stmt = self.conn.prepare(
            "SELECT repo_id, ptm_id, match_strength, evidence FROM ptm_app_link ORDER BY repo_id, ptm_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (repo, ptm, strength, evidence) = row?;
            let corrupt = |reason: String| StoreError::Corrupt {
                table: "ptm_app_link",
                reason,
            };
            out.push(PtmAppLink {
                repo_id: RepoId(repo),
                ptm_id: PtmId(ptm),
                match_strength: strength.parse::<MatchStrength>().map_err(corrupt)?,
                evidence: serde_json::from_str(&evidence).map_err(|e| corrupt(e.to_string()))?,
            });
        }
        Ok(out)
    }

    pub fn unmatched_names(&self) -> Result<Vec<UnmatchedName>> {
        let mut stmt = self.conn.prepare(
            "SELECT repo_id, hub, name, evidence FROM unmatched_name ORDER BY repo_id, hub, name",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (repo, hub, name, evidence) = row?;
            let corrupt = |reason: String| StoreError::Corrupt {
                table: "unmatched_name",
                reason,
            };
            out.push(UnmatchedName {
                repo_id: RepoId(repo),
                hub: hub.parse().map_err(|e| corrupt(format!("{e}")))?,
                name,
                evidence: serde_json::from_str(&evidence).map_err(|e| corrupt(e.to_string()))?,
            });
        }
        Ok(out)
    }

    // ---- extracted metadata ----

    pub fn put_metadata(&mut self, meta: &StoredMetadata) -> Result<()> {
        self.conn.execute(
            "INSERT INTO extracted_metadata(ptm_id, mode, client_id, timestamp, input_digest, review, fields)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)
             ON CONFLICT(ptm_id) DO UPDATE SET mode = excluded.mode, client_id = excluded.client_id,
                timestamp = excluded.timestamp, input_digest = excluded.input_digest,
                review = excluded.review, fields = excluded.fields",
            params![
                meta.ptm_id.as_str(),
                meta.mode,
                meta.client_id,
                meta.timestamp,
                meta.input_digest,
                meta.review.to_string(),
                meta.fields.to_string(),
            ],
        )?;
        Ok(())
    }

    pub fn metadata(&self) -> Result<Vec<StoredMetadata>> {
        let mut stmt = self.conn.prepare(
            "SELECT ptm_id, mode, client_id, timestamp, input_digest, review, fields
             FROM extracted_metadata ORDER BY ptm_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, String>(4)?,
                r.get::<_, String>(5)?,
                r.get::<_, String>(6)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (ptm_id, mode, client_id, timestamp, input_digest, review, fields) = row?;
            let corrupt = |e: serde_json::Error| StoreError::Corrupt {
                table: "extracted_metadata",
                reason: e.to_string(),
            };
            out.push(StoredMetadata {
                ptm_id: PtmId(ptm_id),
                mode,
                client_id,
                timestamp,
                input_digest,
                review: serde_json::from_str(&review).map_err(corrupt)?,
                fields: serde_json::from_str(&fields).map_err(corrupt)?,
            });
        }
        Ok(out)
    }

    pub fn replace_ptm_ptm_links(&mut self, links: &[PtmPtmLink]) -> Result<()> {
        let tx = self.conn.transaction()?;
        tx.execute("DELETE FROM ptm_ptm_link", [])?;
        {
            let mut ins = tx.prepare(
                "INSERT INTO ptm_ptm_link(child_ptm_id, base_model_name, resolved_base_id) VALUES (?1, ?2, ?3)",
            )?;
            for l in links {
                ins.execute(params![
                    l.child_ptm_id.as_str(),
                    l.base_model_name,
                    l.resolved_base_id.as_ref().map(|p| p.as_str())
                ])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    pub fn ptm_ptm_links(&self) -> Result<Vec<PtmPtmLink>> {
        let mut stmt = self.conn.prepare(
            "SELECT child_ptm_id, base_model_name, resolved_base_id FROM ptm_ptm_link
             ORDER BY child_ptm_id, base_model_name",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok(PtmPtmLink {
                child_ptm_id: PtmId(r.get(0)?),
                base_model_name: r.get(1)?,
                resolved_base_id: r.get::<_, Option<String>>(2)?.map(PtmId),
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }
}

pub(crate) fn json_text<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

pub(crate) fn upsert_package(conn: &Connection, pkg: &PtmPackage) -> Result<()> {
    conn.execute(
        "INSERT INTO ptm_package(id, registry, name, downloads, license_raw, tags, card, created_at, snapshot_ref, extra)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)
         ON CONFLICT(id) DO UPDATE SET downloads = excluded.downloads, license_raw = excluded.license_raw,
            tags = excluded.tags, card = excluded.card, created_at = excluded.created_at,
            snapshot_ref = excluded.snapshot_ref, extra = excluded.extra",
        params![
            pkg.id.as_str(),
            pkg.registry.as_str(),
            pkg.name,
            pkg.downloads as i64,
            pkg.license_raw,
            json_text(&pkg.tags),
            pkg.card,
            pkg.created_at.as_ref().map(format_timestamp),
            pkg.snapshot_ref,
            pkg.extra,
        ],
    )?;
    Ok(())
}

pub(crate) fn upsert_repository(conn: &Connection, repo: &Repository) -> Result<()> {
    crate::model::validate_full_name(&repo.full_name).map_err(|e| StoreError::Corrupt {
        table: "repository",
        reason: e.to_string(),
    })?;
    conn.execute(
        "INSERT INTO repository(id, host, full_name, stars, license_raw, scanned_commit)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6)
         ON CONFLICT(id) DO UPDATE SET host = excluded.host, full_name = excluded.full_name,
            stars = excluded.stars, license_raw = excluded.license_raw,
            scanned_commit = excluded.scanned_commit",
        params![
            repo.id.as_str(),
            repo.host,
            repo.full_name,
            repo.stars as i64,
            repo.license_raw,
            repo.scanned_commit
        ],
    )?;
    Ok(())
}

fn write_scan_result(conn: &Connection, result: &RepoScanResult) -> Result<()> {
    let repo = result.repo_id.as_str();
    conn.execute("DELETE FROM usage_record WHERE repo_id = ?1", [repo])?;
    conn.execute(
        "INSERT INTO scan_result(repo_id, files_seen, files_prefiltered, files_parsed, record_count, skipped)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6)
         ON CONFLICT(repo_id) DO UPDATE SET files_seen = excluded.files_seen,
            files_prefiltered = excluded.files_prefiltered, files_parsed = excluded.files_parsed,
            record_count = excluded.record_count, skipped = excluded.skipped",
        params![
            repo,
            result.files_seen as i64,
            result.files_prefiltered as i64,
            result.files_parsed as i64,
            result.records.len() as i64,
            json_text(&result.skipped),
        ],
    )?;
    let mut ins = conn.prepare(
        "INSERT INTO usage_record(id, repo_id, file, line, signature_id, library, hub, model_name)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
    )?;
    for (id, rec) in usage_ids(&result.repo_id, &result.records) {
        ins.execute(params![
            id,
            repo,
            rec.file,
            rec.line as i64,
            rec.signature_id,
            rec.library,
            rec.hub.as_str(),
            rec.model_name.resolved(),
        ])?;
    }
    Ok(())
}

/// Stable usage-record ids: `repo:file:line:signature#n`, where `n` counts
/// repeated (file, line, signature) triples in record order.
pub fn usage_ids<'a>(
    repo: &RepoId,
    records: &'a [UsageRecord],
) -> impl Iterator<Item = (String, &'a UsageRecord)> + 'a {
    let repo = repo.clone();
    let mut prev: Option<(&'a str, u32, &'a str)> = None;
    let mut n = 0usize;
    records.iter().map(move |rec| {
        let key = (rec.file.as_str(), rec.line, rec.signature_id.as_str());
        n = if prev == Some(key) { n + 1 } else { 0 };
        prev = Some(key);
        (
            format!("{}:{}:{}:{}#{}", repo, rec.file, rec.line, rec.signature_id, n),
            rec,
        )
    })
}
