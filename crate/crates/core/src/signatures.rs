//! Catalog of PTM-loading signatures.
//!
//! A signature pairs a library import with a call into that library that loads
//! a model by name. The catalog is a JSON data file:
//!
//! ```json
//! {
//!   "version": "1",
//!   "libraries": ["transformers"],
//!   "signatures": [{
//!     "id": "transformers.from_pretrained",
//!     "library": "transformers",
//!     "hub": "HuggingFace",
//!     "import_forms": ["module", "from"],
//!     "callee_path": "*.from_pretrained",
//!     "model_arg": {"position": 0, "keyword": "pretrained_model_name_or_path"},
//!     "textual_anchors": ["transformers", "from_pretrained"]
//!   }]
//! }
//! ```
//!
//! `callee_path` is dotted and relative to the library; a `*` segment matches
//! any single identifier. `model_arg` names one parameter slot: by `position`
//! (0-based) and/or `keyword` (the same parameter passed either way), or by
//! `callee_segment`, an index into `callee_path` whose identifier is the model
//! name (bundle attributes such as `pipelines.WAV2VEC2_BASE.get_model`, or
//! constructors such as `models.resnet50`). `weights_keyword`, when present,
//! names a keyword argument that switches weight loading on: a call where it is
//! absent, `None` or `False` loads nothing and yields no record.
//! `textual_anchors` must all occur in a file for the textual pre-filter to
//! pass it; disjunctions are separate signatures.
//! Star imports (`from lib import *`) are not resolved.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::Registry;

const DEFAULT_CATALOG: &str = include_str!("../data/signatures.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportForm {
    /// `import lib` / `import lib as alias`
    Module,
    /// `from lib import Symbol` / `from lib import Symbol as alias`
    From,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSlot {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callee_segment: Option<usize>,
}

impl ModelSlot {
    pub fn positional(index: usize) -> Self {
        ModelSlot {
            position: Some(index),
            ..Default::default()
        }
    }

    pub fn keyword(name: &str) -> Self {
        ModelSlot {
            keyword: Some(name.to_string()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signature {
    pub id: String,
    pub library: String,
    pub hub: Registry,
    pub import_forms: Vec<ImportForm>,
    pub callee_path: String,
    pub model_arg: ModelSlot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_keyword: Option<String>,
    pub textual_anchors: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SignatureError {
    #[error("cannot read signature catalog {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed signature catalog: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("no signatures in catalog")]
    NoSignatures,
    #[error("duplicate signature id {0:?}")]
    DuplicateId(String),
    #[error("signature {0:?}: callee_path is empty")]
    EmptyCallee(String),
    #[error("signature {0:?}: library is empty")]
    EmptyLibrary(String),
    #[error("signature {0:?}: import_forms is empty")]
    NoImportForms(String),
    #[error("signature {0:?}: textual_anchors is empty")]
    EmptyAnchors(String),
    #[error("signature {id:?}: malformed model_arg: {reason}")]
    MalformedSlot { id: String, reason: String },
    #[error("signature {id:?}: anchor {anchor:?} does not occur in any realization of the signature")]
    UnrealizableAnchor { id: String, anchor: String },
    #[error("library {0:?} is declared but has no signatures")]
    LibraryWithoutSignatures(String),
}

impl Signature {
    /// Dotted path segments relative to the library.
    pub fn callee_segments(&self) -> Vec<&str> {
        self.callee_path.split('.').collect()
    }

    /// Library segments followed by callee segments.
    pub fn qualified_segments(&self) -> Vec<&str> {
        self.library.split('.').chain(self.callee_path.split('.')).collect()
    }

    /// Whether an alias-resolved callee matches this signature's qualified path.
    pub fn matches_callee(&self, callee_fq: &str) -> bool {
        let want = self.qualified_segments();
        let mut got = callee_fq.split('.');
        for w in &want {
            match got.next() {
                Some(g) if *w == "*" || *w == g => {}
                _ => return false,
            }
        }
        got.next().is_none()
    }

    pub fn validate(&self) -> Result<(), SignatureError> {
        let id = || self.id.clone();
        if self.library.trim().is_empty() {
            return Err(SignatureError::EmptyLibrary(id()));
        }
        if self.callee_path.trim().is_empty() || self.callee_segments().iter().any(|s| s.is_empty()) {
            return Err(SignatureError::EmptyCallee(id()));
        }
        if self.import_forms.is_empty() {
            return Err(SignatureError::NoImportForms(id()));
        }
        let slot = &self.model_arg;
        let malformed = |reason: &str| SignatureError::MalformedSlot {
            id: id(),
            reason: reason.to_string(),
        };
        let by_arg = slot.position.is_some() || slot.keyword.is_some();
        match (by_arg, slot.callee_segment) {
            (false, None) => return Err(malformed("names no slot")),
            (true, Some(_)) => {
                return Err(malformed("callee_segment cannot be combined with position/keyword"))
            }
            (false, Some(i)) if i >= self.callee_segments().len() => {
                return Err(malformed("callee_segment is out of range"))
            }
            _ => {}
        }
        if slot.keyword.as_deref().is_some_and(|k| k.trim().is_empty()) {
            return Err(malformed("keyword is empty"));
        }
        if self.weights_keyword.as_deref().is_some_and(|k| k.trim().is_empty()) {
            return Err(malformed("weights_keyword is empty"));
        }
        if self.textual_anchors.is_empty() || self.textual_anchors.iter().any(|a| a.is_empty()) {
            return Err(SignatureError::EmptyAnchors(id()));
        }
        let realizations = self.realizations();
        for anchor in &self.textual_anchors {
            if !realizations.iter().any(|r| r.contains(anchor.as_str())) {
                return Err(SignatureError::UnrealizableAnchor {
                    id: id(),
                    anchor: anchor.clone(),
                });
            }
        }
        Ok(())
    }

    /// Canonical Python snippets realizing this signature, one per import form.
    /// Each loads the model name [`Signature::REALIZED_MODEL`] (or the callee
    /// segment for bundle signatures).
    pub fn realizations(&self) -> Vec<String> {
        let segments: Vec<String> = self
            .callee_segments()
            .iter()
            .map(|s| if *s == "*" { "Model".to_string() } else { s.to_string() })
            .collect();
        let slot = &self.model_arg;
        let model = format!("{:?}", Self::REALIZED_MODEL);
        let mut args: Vec<String> = match (slot.position, &slot.keyword) {
            (Some(p), _) => {
                let mut parts: Vec<String> = (0..p).map(|i| format!("\"arg{i}\"")).collect();
                parts.push(model);
                parts
            }
            (None, Some(k)) => vec![format!("{k}={model}")],
            (None, None) => Vec::new(),
        };
        if let Some(w) = &self.weights_keyword {
            args.push(format!("{w}=True"));
        }
        let args = args.join(", ");
        self.import_forms
            .iter()
            .map(|form| match form {
                ImportForm::Module => format!(
                    "import {lib}\n\n{lib}.{path}({args})\n",
                    lib = self.library,
                    path = segments.join(".")
                ),
                ImportForm::From => {
                    let head = &segments[0];
                    let rest: String = segments[1..].iter().map(|s| format!(".{s}")).collect();
                    format!(
                        "from {lib} import {head}\n\n{head}{rest}({args})\n",
                        lib = self.library
                    )
                }
            })
            .collect()
    }

    pub const REALIZED_MODEL: &'static str = "org/model-id";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureSet {
    pub version: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub libraries: Vec<String>,
    pub signatures: Vec<Signature>,
}

impl SignatureSet {
    pub fn from_json(text: &str) -> Result<SignatureSet, SignatureError> {
        if text.trim().is_empty() {
            return Err(SignatureError::NoSignatures);
        }
        let set: SignatureSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    /// The catalog shipped with the crate.
    pub fn builtin() -> SignatureSet {
        SignatureSet::from_json(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    pub fn validate(&self) -> Result<(), SignatureError> {
        if self.signatures.is_empty() {
            return Err(SignatureError::NoSignatures);
        }
        let mut ids = BTreeSet::new();
        for sig in &self.signatures {
            if !ids.insert(sig.id.as_str()) {
                return Err(SignatureError::DuplicateId(sig.id.clone()));
            }
            sig.validate()?;
        }
        let used: BTreeSet<&str> = self.signatures.iter().map(|s| s.library.as_str()).collect();
        if let Some(lib) = self.libraries.iter().find(|l| !used.contains(l.as_str())) {
            return Err(SignatureError::LibraryWithoutSignatures(lib.clone()));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Signature> {
        self.signatures.iter().find(|s| s.id == id)
    }

    /// Distinct libraries, sorted.
    pub fn libraries(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.signatures.iter().map(|s| s.library.as_str()).collect();
        set.into_iter().collect()
    }
}

pub fn load_signatures(path: impl AsRef<Path>) -> Result<SignatureSet, SignatureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SignatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SignatureSet::from_json(&text)
}

/// Anchors that must all co-occur for one signature to be possible in a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorGroup {
    pub signature_id: String,
    pub anchors: Vec<String>,
}

impl AnchorGroup {
    pub fn matches(&self, text: &str) -> bool {
        self.anchors.iter().all(|a| text.contains(a.as_str()))
    }
}

/// One anchor group per signature, keyed by library.
pub fn anchors_for(set: &SignatureSet) -> BTreeMap<String, Vec<AnchorGroup>> {
    let mut map: BTreeMap<String, Vec<AnchorGroup>> = BTreeMap::new();
    for sig in &set.signatures {
        map.entry(sig.library.clone()).or_default().push(AnchorGroup {
            signature_id: sig.id.clone(),
            anchors: sig.textual_anchors.clone(),
        });
    }
    map
}
