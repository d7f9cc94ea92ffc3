//! Repository walking with a textual pre-filter in front of the analyzer.
//!
//! Each repository goes through the same funnel: candidate `.py` files are
//! counted, files failing every anchor group are dropped, survivors are parsed
//! and matched. The pre-filter only saves work; disabling it must not change
//! the records produced.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::analyzer::{Analyzer, SkipReason};
use crate::model::{RepoId, Repository, UsageRecord};
use crate::signatures::{anchors_for, AnchorGroup, SignatureSet};
use crate::store::{Store, StoreError};

pub const DEFAULT_EXCLUDES: &[&str] = &["venv", "site-packages", "node_modules"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoScanResult {
    pub repo_id: RepoId,
    pub files_seen: usize,
    pub files_prefiltered: usize,
    pub files_parsed: usize,
    pub records: Vec<UsageRecord>,
    pub skipped: Vec<SkippedFile>,
}

impl RepoScanResult {
    pub fn empty(repo_id: RepoId) -> Self {
        RepoScanResult {
            repo_id,
            files_seen: 0,
            files_prefiltered: 0,
            files_parsed: 0,
            records: Vec::new(),
            skipped: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    /// Directory names never descended into.
    pub excludes: Vec<String>,
    pub skip_hidden: bool,
    pub prefilter: bool,
    pub analyzer: Analyzer,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            excludes: DEFAULT_EXCLUDES.iter().map(|s| s.to_string()).collect(),
            skip_hidden: true,
            prefilter: true,
            analyzer: Analyzer::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("cannot read repository root {path}: {reason}")]
    UnreadableRoot { path: PathBuf, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// True iff every anchor of some group occurs in `text`.
pub fn prefilter(text: &str, groups: &[AnchorGroup]) -> bool {
    groups.iter().any(|g| g.matches(text))
}

fn anchor_groups(set: &SignatureSet) -> Vec<AnchorGroup> {
    anchors_for(set).into_values().flatten().collect()
}

fn excluded(name: &str, config: &ScanConfig) -> bool {
    (config.skip_hidden && name.starts_with('.')) || config.excludes.iter().any(|e| e == name)
}

fn candidates(root: &Path, config: &ScanConfig) -> Result<Vec<PathBuf>, ScanError> {
    let meta = std::fs::metadata(root).map_err(|e| ScanError::UnreadableRoot {
        path: root.to_path_buf(),
        reason: e.to_string(),
    })?;
    if !meta.is_dir() {
        return Err(ScanError::UnreadableRoot {
            path: root.to_path_buf(),
            reason: "not a directory".into(),
        });
    }
    let mut out = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_type().is_dir() || !excluded(&e.file_name().to_string_lossy(), config));
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                log::warn!("skipping unreadable entry under {}: {e}", root.display());
                continue;
            }
        };
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "py") {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

enum FileOutcome {
    Filtered,
    Parsed(Vec<UsageRecord>),
    Skipped { prefiltered: bool, reason: SkipReason },
}

fn scan_one(path: &Path, rel: &str, set: &SignatureSet, groups: &[AnchorGroup], config: &ScanConfig) -> FileOutcome {
    let limit = config.analyzer.max_file_bytes as u64;
    match std::fs::metadata(path) {
        Ok(m) if m.len() > limit => {
            return FileOutcome::Skipped {
                prefiltered: false,
                reason: SkipReason::TooLarge { bytes: m.len(), limit },
            }
        }
        Ok(_) => {}
        Err(e) => {
            return FileOutcome::Skipped {
                prefiltered: false,
                reason: SkipReason::Unreadable { message: e.to_string() },
            }
        }
    }
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            return FileOutcome::Skipped {
                prefiltered: false,
                reason: SkipReason::Unreadable { message: e.to_string() },
            }
        }
    };
    let Ok(text) = String::from_utf8(bytes) else {
        return FileOutcome::Skipped {
            prefiltered: false,
            reason: SkipReason::NotUtf8,
        };
    };
    if config.prefilter && !prefilter(&text, groups) {
        return FileOutcome::Filtered;
    }
    match config.analyzer.scan_file(rel, &text, set) {
        Ok(records) => FileOutcome::Parsed(records),
        Err(skip) => FileOutcome::Skipped {
            prefiltered: true,
            reason: skip.reason,
        },
    }
}

/// Scans one repository tree. Files are processed on the current rayon pool.
pub fn scan_repo(root: &Path, repo_id: RepoId, set: &SignatureSet, config: &ScanConfig) -> Result<RepoScanResult, ScanError> {
    let files = candidates(root, config)?;
    let groups = anchor_groups(set);
    let outcomes: Vec<(String, FileOutcome)> = files
        .par_iter()
        .map(|p| {
            let rel = relative(root, p);
            let outcome = scan_one(p, &rel, set, &groups, config);
            (rel, outcome)
        })
        .collect();
    let mut result = RepoScanResult::empty(repo_id);
    result.files_seen = outcomes.len();
    for (rel, outcome) in outcomes {
        match outcome {
            FileOutcome::Filtered => {}
            FileOutcome::Parsed(records) => {
                result.files_prefiltered += 1;
                result.files_parsed += 1;
                result.records.extend(records);
            }
            FileOutcome::Skipped { prefiltered, reason } => {
                if prefiltered {
                    result.files_prefiltered += 1;
                }
                log::info!("skipped {rel}: {reason}");
                result.skipped.push(SkippedFile {
                    path: rel,
                    reason: reason.to_string(),
                });
            }
        }
    }
    result.records.sort_by(|a, b| (&a.file, a.line, &a.signature_id).cmp(&(&b.file, b.line, &b.signature_id)));
    Ok(result)
}

/// One repository checkout inside a corpus directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRepo {
    pub repo: Repository,
    pub root: PathBuf,
}

/// Maps each subdirectory of `corpus` to a repository: `owner__name` becomes
/// `github/owner/name`, anything else `local/local/<dir>`.
pub fn discover_repos(corpus: &Path) -> Result<Vec<CorpusRepo>, ScanError> {
    let unreadable = |e: std::io::Error| ScanError::UnreadableRoot {
        path: corpus.to_path_buf(),
        reason: e.to_string(),
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(corpus).map_err(unreadable)? {
        let entry = entry.map_err(unreadable)?;
        if !entry.file_type().map_err(unreadable)?.is_dir() {
            continue;
        }
        let dir = entry.file_name().to_string_lossy().into_owned();
        if dir.starts_with('.') {
            continue;
        }
        let repo = match dir.split_once("__") {
            Some((owner, name)) if !owner.is_empty() && !name.is_empty() && !name.contains('/') => {
                Repository::new("github", format!("{owner}/{name}"))
            }
            _ => Repository::new("local", format!("local/{dir}")),
        };
        match repo {
            Ok(repo) => out.push(CorpusRepo { repo, root: entry.path() }),
            Err(e) => log::warn!("ignoring corpus entry {dir:?}: {e}"),
        }
    }
    out.sort_by(|a, b| a.repo.id.cmp(&b.repo.id));
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub repos_scanned: usize,
    pub repos_with_records: usize,
    pub total_records: usize,
    pub repos_failed: usize,
}

/// Scans every repository with up to `parallelism` worker threads and
/// persists the results. Repositories must already be registered in `store`.
pub fn scan_corpus(
    store: &mut Store,
    repos: &[CorpusRepo],
    set: &SignatureSet,
    config: &ScanConfig,
    parallelism: usize,
) -> Result<(CorpusSummary, Vec<RepoScanResult>), ScanError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ScanError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<RepoScanResult, ScanError>> = pool.install(|| {
        repos
            .par_iter()
            .map(|r| scan_repo(&r.root, r.repo.id.clone(), set, config))
            .collect()
    });
    let mut summary = CorpusSummary::default();
    let mut results = Vec::new();
    for (repo, outcome) in repos.iter().zip(outcomes) {
        match outcome {
            Ok(res) => {
                summary.repos_scanned += 1;
                summary.total_records += res.records.len();
                if !res.records.is_empty() {
                    summary.repos_with_records += 1;
                }
                results.push(res);
            }
            Err(e) => {
                log::error!("scan of {} failed: {e}", repo.repo.id);
                summary.repos_failed += 1;
            }
        }
    }
    store.replace_scan_results(&results)?;
    Ok((summary, results))
}
