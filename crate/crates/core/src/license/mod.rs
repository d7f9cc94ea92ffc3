//! License classification, repository license detection and compatibility.

mod detect;
mod flows;
mod matrix;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use detect::{detect_repo_license, detect_repo_license_with, Fingerprint, FingerprintSet, LICENSE_CANDIDATES};
pub use flows::{license_flows, sankey_json, FlowRow, FlowSummary, FlowTable};
pub use matrix::{check_compatibility, CompatibilityVerdict, Matrix, MatrixEntry, MatrixError, Verdict};

const CLASS_TABLE: &str = include_str!("../../data/licenses.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LicenseCategory {
    Permissive,
    WeakCopyleft,
    StrongCopyleft,
    Public,
    Rail,
    NoLicense,
    Multiple,
    Other,
}

impl LicenseCategory {
    pub const ALL: [LicenseCategory; 8] = [
        LicenseCategory::Permissive,
        LicenseCategory::WeakCopyleft,
        LicenseCategory::StrongCopyleft,
        LicenseCategory::Public,
        LicenseCategory::Rail,
        LicenseCategory::NoLicense,
        LicenseCategory::Multiple,
        LicenseCategory::Other,
    ];

    /// Whether compatibility is ever assessed for this category.
    pub fn is_analyzed(self) -> bool {
        !matches!(
            self,
            LicenseCategory::NoLicense | LicenseCategory::Multiple | LicenseCategory::Other
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LicenseClass {
    pub spdx_like: String,
    pub category: LicenseCategory,
}

impl LicenseClass {
    pub fn no_license() -> Self {
        LicenseClass {
            spdx_like: NO_LICENSE.into(),
            category: LicenseCategory::NoLicense,
        }
    }

    pub fn multiple() -> Self {
        LicenseClass {
            spdx_like: MULTIPLE.into(),
            category: LicenseCategory::Multiple,
        }
    }
}

impl fmt::Display for LicenseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spdx_like)
    }
}

pub const NO_LICENSE: &str = "no-license";
pub const MULTIPLE: &str = "multiple";
pub const OTHER: &str = "other";

#[derive(Debug, Clone, Deserialize)]
struct TableFile {
    classes: BTreeMap<String, LicenseCategory>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

/// Token-to-category table with aliases.
#[derive(Debug, Clone)]
pub struct ClassificationTable {
    classes: BTreeMap<String, LicenseCategory>,
    aliases: BTreeMap<String, String>,
}

impl ClassificationTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: TableFile = serde_json::from_str(text)?;
        Ok(ClassificationTable {
            classes: file.classes,
            aliases: file.aliases,
        })
    }

    pub fn builtin() -> &'static ClassificationTable {
        static TABLE: OnceLock<ClassificationTable> = OnceLock::new();
        TABLE.get_or_init(|| ClassificationTable::from_json(CLASS_TABLE).expect("shipped table is valid"))
    }

    pub fn classify(&self, raw: &str) -> LicenseClass {
        let token = normalize_token(raw);
        if token.is_empty() {
            return LicenseClass::no_license();
        }
        let token = self.aliases.get(&token).cloned().unwrap_or(token);
        match self.classes.get(&token) {
            Some(&category) => LicenseClass {
                spdx_like: token,
                category,
            },
            None if token == MULTIPLE => LicenseClass::multiple(),
            None => LicenseClass {
                spdx_like: OTHER.into(),
                category: LicenseCategory::Other,
            },
        }
    }

    /// Known tokens, sorted.
    pub fn tokens(&self) -> impl Iterator<Item = (&str, LicenseCategory)> {
        self.classes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.classes.contains_key(token)
    }
}

/// Lowercase, trim, and collapse internal whitespace runs to `-`.
pub fn normalize_token(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join("-").to_lowercase()
}

pub fn classify_license(raw: &str) -> LicenseClass {
    ClassificationTable::builtin().classify(raw)
}

impl FromStr for LicenseClass {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(classify_license(s))
    }
}
