//! Import table construction.
//!
//! The table is flat: imports at every nesting level (module, function, class,
//! conditional blocks) bind into one map, and the last binding in source order
//! wins. This is an approximation with no flow sensitivity.

use std::collections::BTreeMap;

use super::tree::{Stmt, SyntaxTree};
use crate::signatures::ImportForm;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    /// Fully-qualified origin (`transformers` or `transformers.AutoTokenizer`).
    pub origin: String,
    pub form: ImportForm,
    pub line: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportTable {
    pub bindings: BTreeMap<String, Binding>,
    /// Modules named in `from m import *`; recorded, never resolved.
    pub star_imports: Vec<String>,
}

impl ImportTable {
    pub fn origin(&self, local: &str) -> Option<&str> {
        self.bindings.get(local).map(|b| b.origin.as_str())
    }

    fn bind(&mut self, local: String, origin: String, form: ImportForm, line: u32) {
        if local.is_empty() || origin.is_empty() {
            return;
        }
        self.bindings.insert(local, Binding { origin, form, line });
    }
}

pub fn build_import_table(tree: &SyntaxTree) -> ImportTable {
    let mut table = ImportTable::default();
    for stmt in tree.statements() {
        match stmt {
            Stmt::Import { line, names } => {
                for n in names {
                    match &n.alias {
                        // `import a.b as x` binds x to a.b
                        Some(alias) => table.bind(alias.clone(), n.name.clone(), ImportForm::Module, *line),
                        // `import a.b` binds a to a
                        None => {
                            let head = n.name.split('.').next().unwrap_or_default().to_string();
                            table.bind(head.clone(), head, ImportForm::Module, *line);
                        }
                    }
                }
            }
            Stmt::FromImport {
                line,
                module,
                level,
                names,
            } => {
                let mut base = ".".repeat(*level as usize);
                if let Some(m) = module {
                    base.push_str(m);
                }
                for n in names {
                    if n.name == "*" {
                        table.star_imports.push(base.clone());
                        continue;
                    }
                    let origin = if base.is_empty() || base.ends_with('.') {
                        format!("{base}{}", n.name)
                    } else {
                        format!("{base}.{}", n.name)
                    };
                    let local = n.alias.clone().unwrap_or_else(|| n.name.clone());
                    table.bind(local, origin, ImportForm::From, *line);
                }
            }
            _ => {}
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::frontend::{RustPythonFrontend, SourceFrontend};

    fn table(src: &str) -> ImportTable {
        build_import_table(&RustPythonFrontend.parse("t.py", src).unwrap())
    }

    #[test]
    fn from_import() {
        let t = table("from transformers import AutoTokenizer\n");
        assert_eq!(t.origin("AutoTokenizer"), Some("transformers.AutoTokenizer"));
        assert_eq!(t.bindings["AutoTokenizer"].form, ImportForm::From);
    }

    #[test]
    fn plain_import() {
        let t = table("import torch\n");
        assert_eq!(t.origin("torch"), Some("torch"));
        assert_eq!(t.bindings.len(), 1);
    }

    #[test]
    fn aliased_from_import() {
        let t = table("from transformers import pipeline as p\n");
        assert_eq!(t.origin("p"), Some("transformers.pipeline"));
        assert_eq!(t.origin("pipeline"), None);
    }

    #[test]
    fn dotted_imports() {
        let t = table("import torchvision.models\nimport torch.hub as th\n");
        assert_eq!(t.origin("torchvision"), Some("torchvision"));
        assert_eq!(t.origin("th"), Some("torch.hub"));
    }

    #[test]
    fn later_binding_shadows() {
        let t = table("from a import m\nif x:\n    from b import m\n");
        assert_eq!(t.origin("m"), Some("b.m"));
    }

    #[test]
    fn nested_imports_are_collected() {
        let t = table("def f():\n    import spacy\n    return spacy.load('en')\n");
        assert_eq!(t.origin("spacy"), Some("spacy"));
    }

    #[test]
    fn star_and_relative() {
        let t = table("from transformers import *\nfrom . import util\nfrom ..pkg import thing\n");
        assert_eq!(t.star_imports, vec!["transformers".to_string()]);
        assert_eq!(t.origin("util"), Some(".util"));
        assert_eq!(t.origin("thing"), Some("..pkg.thing"));
    }

    #[test]
    fn comments_bind_nothing() {
        let t = table("# from transformers import pipeline\nx = 'import torch'\n");
        assert!(t.bindings.is_empty());
    }
}
