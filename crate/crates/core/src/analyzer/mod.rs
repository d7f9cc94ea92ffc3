//! Python source analysis: parse, resolve imports and calls, match signatures.

pub mod frontend;
pub mod imports;
pub mod resolve;
pub mod tree;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use frontend::{frontends, RustPythonFrontend, SourceFrontend, SyntaxError, DEFAULT_FRONTEND};
pub use imports::{build_import_table, Binding, ImportTable};
pub use resolve::{
    extract_model_name, loads_weights, model_name, resolve_calls, CallSite, ModuleConstants, ValueDesc,
};
pub use tree::SyntaxTree;

use crate::model::UsageRecord;
use crate::signatures::SignatureSet;

pub const DEFAULT_MAX_FILE_BYTES: usize = 2 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkipReason {
    Syntax { line: u32, column: u32, message: String },
    TooLarge { bytes: u64, limit: u64 },
    NotUtf8,
    Unreadable { message: String },
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::Syntax { line, column, message } => {
                write!(f, "syntax error at {line}:{column}: {message}")
            }
            SkipReason::TooLarge { bytes, limit } => write!(f, "file is {bytes} bytes, limit {limit}"),
            SkipReason::NotUtf8 => f.write_str("not valid UTF-8"),
            SkipReason::Unreadable { message } => write!(f, "unreadable: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("skipped {path}: {reason}")]
pub struct FileSkipped {
    pub path: String,
    pub reason: SkipReason,
}

/// Parses with the default front-end.
pub fn parse_source(text: &str) -> Result<SyntaxTree, FileSkipped> {
    RustPythonFrontend.parse("<source>", text).map_err(|e| FileSkipped {
        path: "<source>".into(),
        reason: syntax_reason(e),
    })
}

fn syntax_reason(e: SyntaxError) -> SkipReason {
    SkipReason::Syntax {
        line: e.line,
        column: e.column,
        message: e.message,
    }
}

#[derive(Clone)]
pub struct Analyzer {
    frontend: Arc<dyn SourceFrontend>,
    pub max_file_bytes: usize,
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer::new(Arc::new(RustPythonFrontend))
    }
}

impl std::fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Analyzer").field("max_file_bytes", &self.max_file_bytes).finish()
    }
}

impl Analyzer {
    pub fn new(frontend: Arc<dyn SourceFrontend>) -> Self {
        Analyzer {
            frontend,
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
        }
    }

    pub fn parse(&self, path: &str, text: &str) -> Result<SyntaxTree, FileSkipped> {
        if text.len() > self.max_file_bytes {
            return Err(FileSkipped {
                path: path.to_string(),
                reason: SkipReason::TooLarge {
                    bytes: text.len() as u64,
                    limit: self.max_file_bytes as u64,
                },
            });
        }
        self.frontend.parse(path, text).map_err(|e| FileSkipped {
            path: path.to_string(),
            reason: syntax_reason(e),
        })
    }

    /// One record per (call site, matching signature), sorted by (line, signature id).
    pub fn scan_file(&self, path: &str, text: &str, set: &SignatureSet) -> Result<Vec<UsageRecord>, FileSkipped> {
        let tree = self.parse(path, text)?;
        Ok(records_for_tree(path, &tree, set))
    }
}

pub fn records_for_tree(path: &str, tree: &SyntaxTree, set: &SignatureSet) -> Vec<UsageRecord> {
    let table = build_import_table(tree);
    let consts = ModuleConstants::from_tree(tree);
    let mut out = Vec::new();
    for site in resolve_calls(path, tree, &table) {
        for sig in &set.signatures {
            if !sig.import_forms.contains(&site.import_form)
                || !sig.matches_callee(&site.callee_fq)
                || !loads_weights(&site, sig)
            {
                continue;
            }
            out.push(UsageRecord {
                file: path.to_string(),
                line: site.line,
                signature_id: sig.id.clone(),
                model_name: model_name(&site, sig, &consts),
                library: sig.library.clone(),
                hub: sig.hub,
            });
        }
    }
    out.sort_by(|a, b| (a.line, &a.signature_id).cmp(&(b.line, &b.signature_id)));
    out
}

pub fn scan_file(path: &str, text: &str, set: &SignatureSet) -> Result<Vec<UsageRecord>, FileSkipped> {
    Analyzer::default().scan_file(path, text, set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelName;

    const FIG5: &str = "from transformers import AutoTokenizer, AutoModelForMaskedLM\n\ntokenizer = AutoTokenizer.from_pretrained(\"bert-base-multilingual-cased\")\nmodel = AutoModelForMaskedLM.from_pretrained(\"bert-base-multilingual-cased\")\n";

    #[test]
    fn figure_file_yields_two_records() {
        let recs = scan_file("fig5.py", FIG5, &SignatureSet::builtin()).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert_eq!(r.model_name, ModelName::Resolved("bert-base-multilingual-cased".into()));
            assert_eq!(r.signature_id, "transformers.from_pretrained");
        }
        assert_eq!(recs.iter().map(|r| r.line).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn figure_tree_has_two_attribute_calls() {
        let tree = parse_source(FIG5).unwrap();
        let calls = tree.calls();
        assert_eq!(calls.len(), 2);
        assert!(calls.iter().all(|c| matches!(c.func, tree::Expr::Attribute { .. })));
    }

    #[test]
    fn commented_out_signature_is_ignored() {
        let recs = scan_file("c.py", "# from transformers import pipeline\n", &SignatureSet::builtin()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn torchvision_constructor_with_weights() {
        let src = "import torchvision\nnet = torchvision.models.resnet50(weights=\"IMAGENET1K_V2\")\n";
        let recs = scan_file("tv.py", src, &SignatureSet::builtin()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].signature_id, "torchvision.models.resnet50");
        assert_eq!(recs[0].model_name, ModelName::Resolved("resnet50".into()));
        assert_eq!(recs[0].library, "torchvision");
    }

    #[test]
    fn import_form_must_be_accepted() {
        // diffusers module-form loads are matched by the module-form signature only
        let src = "import diffusers\np = diffusers.StableDiffusionPipeline.from_pretrained('runwayml/stable-diffusion-v1-5')\n";
        let recs = scan_file("d.py", src, &SignatureSet::builtin()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].signature_id, "diffusers.module.from_pretrained");
    }

    #[test]
    fn syntax_error_skips_file() {
        let err = scan_file("bad.py", "def f(:\n", &SignatureSet::builtin()).unwrap_err();
        assert_eq!(err.path, "bad.py");
        assert!(matches!(err.reason, SkipReason::Syntax { line: 1, .. }));
    }

    #[test]
    fn oversized_file_is_skipped() {
        let mut a = Analyzer::default();
        a.max_file_bytes = 10;
        let err = a.scan_file("big.py", "x = '0123456789'\n", &SignatureSet::builtin()).unwrap_err();
        assert!(matches!(err.reason, SkipReason::TooLarge { limit: 10, .. }));
    }

    #[test]
    fn same_line_calls_each_count() {
        let src = "from transformers import AutoModel as M\na = M.from_pretrained('x'); b = M.from_pretrained('y')\n";
        let recs = scan_file("s.py", src, &SignatureSet::builtin()).unwrap();
        let names: Vec<_> = recs.iter().map(|r| r.model_name.clone()).collect();
        assert_eq!(names.len(), 2);
        assert!(names.contains(&ModelName::Resolved("x".into())));
        assert!(names.contains(&ModelName::Resolved("y".into())));
    }
}
