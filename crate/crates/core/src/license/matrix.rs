//! Directional compatibility matrix keyed by (upstream, downstream).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassificationTable, LicenseClass};

const MATRIX: &str = include_str!("../../data/license_matrix.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Compatible,
    Incompatible,
    Unanalyzed,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Compatible => "Compatible",
            Verdict::Incompatible => "Incompatible",
            Verdict::Unanalyzed => "Unanalyzed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompatibilityVerdict {
    pub verdict: Verdict,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub upstream: String,
    pub downstream: String,
    pub verdict: Verdict,
    pub reason: String,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    #[allow(dead_code)]
    version: String,
    #[serde(default)]
    #[allow(dead_code)]
    source: String,
    entries: Vec<MatrixEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("cannot read matrix {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed matrix: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("matrix entry {index}: unknown license token {token:?}")]
    UnknownLicense { index: usize, token: String },
    #[error("matrix entry {index}: duplicate pair ({upstream}, {downstream})")]
    Duplicate {
        index: usize,
        upstream: String,
        downstream: String,
    },
    #[error("matrix entry {index}: {message}")]
    Invalid { index: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct Matrix {
    cells: BTreeMap<(String, String), (Verdict, String)>,
}

impl Matrix {
    pub fn from_json(text: &str) -> Result<Matrix, MatrixError> {
        let file: MatrixFile = serde_json::from_str(text)?;
        let table = ClassificationTable::builtin();
        let mut cells = BTreeMap::new();
        for (index, e) in file.entries.into_iter().enumerate() {
            for token in [&e.upstream, &e.downstream] {
                if !table.contains(token) {
                    return Err(MatrixError::UnknownLicense {
                        index,
                        token: token.clone(),
                    });
                }
            }
            let invalid = |message: &str| MatrixError::Invalid {
                index,
                message: message.to_string(),
            };
            if e.verdict == Verdict::Unanalyzed {
                return Err(invalid("unanalyzed pairs are expressed by omission"));
            }
            if e.reason.trim().is_empty() {
                return Err(invalid("reason is empty"));
            }
            let key = (e.upstream.clone(), e.downstream.clone());
            if cells.insert(key, (e.verdict, e.reason)).is_some() {
                return Err(MatrixError::Duplicate {
                    index,
                    upstream: e.upstream,
                    downstream: e.downstream,
                });
            }
        }
        Ok(Matrix { cells })
    }

    pub fn load(path: &Path) -> Result<Matrix, MatrixError> {
        let text = std::fs::read_to_string(path).map_err(|source| MatrixError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Matrix::from_json(&text)
    }

    pub fn builtin() -> Matrix {
        Matrix::from_json(MATRIX).expect("shipped matrix is valid")
    }

    pub fn get(&self, upstream: &str, downstream: &str) -> Option<(Verdict, &str)> {
        self.cells
            .get(&(upstream.to_string(), downstream.to_string()))
            .map(|(v, r)| (*v, r.as_str()))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Verdict for reusing an `upstream`-licensed PTM in a `downstream`-licensed
/// application. Direction matters.
pub fn check_compatibility(upstream: &LicenseClass, downstream: &LicenseClass, matrix: &Matrix) -> CompatibilityVerdict {
    let unanalyzed = |reason: String| CompatibilityVerdict {
        verdict: Verdict::Unanalyzed,
        reason,
    };
    for side in [upstream, downstream] {
        if !side.category.is_analyzed() {
            return unanalyzed(format!("no compatibility analysis for {}", side.spdx_like));
        }
    }
    if upstream.spdx_like == downstream.spdx_like {
        return CompatibilityVerdict {
            verdict: Verdict::Compatible,
            reason: "licenses are identical".into(),
        };
    }
    match matrix.get(&upstream.spdx_like, &downstream.spdx_like) {
        Some((verdict, reason)) => CompatibilityVerdict {
            verdict,
            reason: reason.to_string(),
        },
        None => unanalyzed(format!(
            "pair ({}, {}) is not in the compatibility matrix",
            upstream.spdx_like, downstream.spdx_like
        )),
    }
}
