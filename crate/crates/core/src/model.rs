//! Shared domain types.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// Model hub a PTM package was collected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Registry {
    HuggingFace,
    PyTorchHub,
}

impl Registry {
    pub const ALL: [Registry; 2] = [Registry::HuggingFace, Registry::PyTorchHub];

    pub fn as_str(self) -> &'static str {
        match self {
            Registry::HuggingFace => "HuggingFace",
            Registry::PyTorchHub => "PyTorchHub",
        }
    }

    /// Short prefix used in package identifiers.
    pub fn slug(self) -> &'static str {
        match self {
            Registry::HuggingFace => "hf",
            Registry::PyTorchHub => "pth",
        }
    }
}

impl fmt::Display for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown registry {0:?} (expected HuggingFace or PyTorchHub)")]
pub struct UnknownRegistry(pub String);

impl FromStr for Registry {
    type Err = UnknownRegistry;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "huggingface" | "hf" => Ok(Registry::HuggingFace),
            "pytorchhub" | "pytorch" | "torchhub" | "pth" => Ok(Registry::PyTorchHub),
            _ => Err(UnknownRegistry(s.to_string())),
        }
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

string_id!(
    /// Package identifier, derived from `(registry, name)` so re-ingestion is stable.
    PtmId
);
string_id!(
    /// Repository identifier, `host/owner/name`.
    RepoId
);

impl PtmId {
    pub fn for_package(registry: Registry, name: &str) -> Self {
        PtmId(format!("{}/{}", registry.slug(), name))
    }
}

impl RepoId {
    pub fn for_repo(host: &str, full_name: &str) -> Self {
        RepoId(format!("{host}/{full_name}"))
    }
}

/// A PTM package row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PtmPackage {
    pub id: PtmId,
    pub registry: Registry,
    pub name: String,
    pub downloads: u64,
    pub license_raw: Option<String>,
    pub tags: Vec<String>,
    pub card: Option<String>,
    pub created_at: Option<DateTime<Utc>>,
    pub snapshot_ref: Option<String>,
    /// Snapshot fields outside the schema, as a raw JSON object.
    pub extra: String,
}

impl PtmPackage {
    pub fn new(registry: Registry, name: impl Into<String>) -> Self {
        let name = name.into();
        PtmPackage {
            id: PtmId::for_package(registry, &name),
            registry,
            name,
            downloads: 0,
            license_raw: None,
            tags: Vec::new(),
            card: None,
            created_at: None,
            snapshot_ref: None,
            extra: "{}".to_string(),
        }
    }
}

/// An application repository row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repository {
    pub id: RepoId,
    pub host: String,
    pub full_name: String,
    pub stars: u64,
    pub license_raw: Option<String>,
    pub scanned_commit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepositoryError {
    #[error("repository name {0:?} must have exactly one '/' separating owner and name")]
    BadFullName(String),
}

impl Repository {
    pub fn new(host: impl Into<String>, full_name: impl Into<String>) -> Result<Self, RepositoryError> {
        let host = host.into();
        let full_name = full_name.into();
        validate_full_name(&full_name)?;
        Ok(Repository {
            id: RepoId::for_repo(&host, &full_name),
            host,
            full_name,
            stars: 0,
            license_raw: None,
            scanned_commit: None,
        })
    }
}

pub(crate) fn validate_full_name(full_name: &str) -> Result<(), RepositoryError> {
    let mut parts = full_name.split('/');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(owner), Some(name), None) if !owner.is_empty() && !name.is_empty() => Ok(()),
        _ => Err(RepositoryError::BadFullName(full_name.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchStrength {
    Exact,
    CaseInsensitive,
}

impl MatchStrength {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchStrength::Exact => "Exact",
            MatchStrength::CaseInsensitive => "CaseInsensitive",
        }
    }
}

impl FromStr for MatchStrength {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Exact" => Ok(MatchStrength::Exact),
            "CaseInsensitive" => Ok(MatchStrength::CaseInsensitive),
            other => Err(format!("unknown match strength {other:?}")),
        }
    }
}

/// Application → model dependency edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PtmAppLink {
    pub repo_id: RepoId,
    pub ptm_id: PtmId,
    /// Usage record ids backing the link; never empty.
    pub evidence: Vec<String>,
    pub match_strength: MatchStrength,
}

/// Model → base-model dependency edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PtmPtmLink {
    pub child_ptm_id: PtmId,
    pub base_model_name: String,
    pub resolved_base_id: Option<PtmId>,
}

/// Model name found in the model slot of a loading call.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelName {
    Resolved(String),
    /// Not statically known (parameter, f-string, concatenation, ...).
    Dynamic,
}

impl ModelName {
    pub fn resolved(&self) -> Option<&str> {
        match self {
            ModelName::Resolved(s) => Some(s),
            ModelName::Dynamic => None,
        }
    }

    pub fn from_option(name: Option<String>) -> Self {
        name.map_or(ModelName::Dynamic, ModelName::Resolved)
    }
}

impl Serialize for ModelName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.resolved().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(ModelName::from_option(Option::<String>::deserialize(d)?))
    }
}

/// One confirmed PTM-loading call site.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UsageRecord {
    pub file: String,
    pub line: u32,
    pub signature_id: String,
    pub model_name: ModelName,
    pub library: String,
    pub hub: Registry,
}

/// Formats a timestamp the way every export writes it.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Accepts RFC 3339 timestamps or bare `YYYY-MM-DD` dates (taken as midnight UTC).
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(text) {
        return Some(ts.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
}
