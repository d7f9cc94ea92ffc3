//! Call-site resolution and model-name extraction.

use std::collections::{BTreeMap, BTreeSet};

use super::imports::ImportTable;
use super::tree::{AssignKind, Call, Expr, Stmt, SyntaxTree};
use crate::model::ModelName;
use crate::signatures::{ImportForm, Signature};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueDesc {
    StringLiteral(String),
    /// A bare name. `local` is set when an enclosing function, lambda or
    /// comprehension (or the immediately enclosing class body) binds it.
    NameRef { name: String, local: bool },
    /// `None` or `False`.
    Falsy,
    /// `*args` in positional position.
    Starred,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub file: String,
    pub line: u32,
    pub callee_fq: String,
    /// How the callee head was imported.
    pub import_form: ImportForm,
    pub args: Vec<ValueDesc>,
    pub kwargs: BTreeMap<String, ValueDesc>,
    /// The call passes `**mapping`.
    pub kwargs_splat: bool,
}

/// Names bound exactly once at module scope, to a plain string literal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModuleConstants {
    values: BTreeMap<String, String>,
}

impl ModuleConstants {
    pub fn from_tree(tree: &SyntaxTree) -> Self {
        let mut counts: BTreeMap<String, (usize, Option<String>)> = BTreeMap::new();
        let mut note = |name: String, value: Option<String>| {
            let e = counts.entry(name).or_insert((0, None));
            e.0 += 1;
            e.1 = value;
        };
        for (name, value) in scope_bindings(&tree.body) {
            note(name, value);
        }
        // Assignments through `global` inside any function or class body.
        for stmt in tree.statements() {
            if let Stmt::FunctionDef { body, .. } | Stmt::ClassDef { body, .. } = stmt {
                let globals = declared(body, true);
                for (name, _) in scope_bindings(body) {
                    if globals.contains(&name) {
                        note(name, None);
                    }
                }
            }
        }
        let values = counts
            .into_iter()
            .filter_map(|(name, (n, value))| match (n, value) {
                (1, Some(v)) => Some((name, v)),
                _ => None,
            })
            .collect();
        ModuleConstants { values }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

/// Bindings made directly in one scope's statement list, in source order.
/// The value is the string literal for `NAME = "..."` bindings, `None` otherwise.
fn scope_bindings(body: &[Stmt]) -> Vec<(String, Option<String>)> {
    fn walrus(e: &Expr, out: &mut Vec<(String, Option<String>)>) {
        if let Expr::Walrus { target, .. } = e {
            out.push((target.clone(), None));
        }
        for c in e.children() {
            walrus(c, out);
        }
    }
    fn names(e: &Expr, out: &mut Vec<(String, Option<String>)>) {
        let mut v = Vec::new();
        e.bound_names(&mut v);
        out.extend(v.into_iter().map(|n| (n, None)));
    }
    fn walk(stmts: &[Stmt], out: &mut Vec<(String, Option<String>)>) {
        for s in stmts {
            for e in s.exprs() {
                walrus(e, out);
            }
            match s {
                Stmt::Assign {
                    targets, value, kind, ..
                } => {
                    for t in targets {
                        match (t, value, kind) {
                            (Expr::Name(n), Some(Expr::Str(v)), AssignKind::Plain | AssignKind::Annotated) => {
                                out.push((n.clone(), Some(v.clone())))
                            }
                            _ => names(t, out),
                        }
                    }
                }
                Stmt::Import { names: ns, .. } => {
                    for n in ns {
                        let local = n
                            .alias
                            .clone()
                            .unwrap_or_else(|| n.name.split('.').next().unwrap_or_default().to_string());
                        out.push((local, None));
                    }
                }
                Stmt::FromImport { names: ns, .. } => {
                    for n in ns.iter().filter(|n| n.name != "*") {
                        out.push((n.alias.clone().unwrap_or_else(|| n.name.clone()), None));
                    }
                }
                Stmt::FunctionDef { name, .. } | Stmt::ClassDef { name, .. } => out.push((name.clone(), None)),
                Stmt::Block { targets, bodies, .. } => {
                    targets.iter().for_each(|t| names(t, out));
                    bodies.iter().for_each(|b| walk(b, out));
                }
                Stmt::Global { .. } | Stmt::Nonlocal { .. } | Stmt::Expr(_) => {}
            }
        }
    }
    let mut out = Vec::new();
    walk(body, &mut out);
    out
}

/// Names declared `global` (or `nonlocal` when `global_only` is false) in one scope.
fn declared(body: &[Stmt], global_only: bool) -> BTreeSet<String> {
    fn walk(stmts: &[Stmt], global_only: bool, out: &mut BTreeSet<String>) {
        for s in stmts {
            match s {
                Stmt::Global { names } => out.extend(names.iter().cloned()),
                Stmt::Nonlocal { names } if !global_only => out.extend(names.iter().cloned()),
                Stmt::Block { bodies, .. } => bodies.iter().for_each(|b| walk(b, global_only, out)),
                _ => {}
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(body, global_only, &mut out);
    out
}

enum Frame {
    Function(BTreeSet<String>),
    Class(BTreeSet<String>),
    Local(BTreeSet<String>),
}

struct Walker<'a> {
    file: &'a str,
    table: &'a ImportTable,
    frames: Vec<Frame>,
    out: Vec<CallSite>,
}

impl Walker<'_> {
    fn is_local(&self, name: &str) -> bool {
        let last = self.frames.len().saturating_sub(1);
        self.frames.iter().enumerate().any(|(i, f)| match f {
            Frame::Function(s) | Frame::Local(s) => s.contains(name),
            Frame::Class(s) => i == last && s.contains(name),
        })
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            for e in s.exprs() {
                self.expr(e);
            }
            match s {
                Stmt::FunctionDef { params, body, .. } => {
                    let excluded = declared(body, false);
                    let mut locals: BTreeSet<String> = params.iter().cloned().collect();
                    locals.extend(scope_bindings(body).into_iter().map(|(n, _)| n));
                    locals.retain(|n| !excluded.contains(n));
                    self.frames.push(Frame::Function(locals));
                    self.stmts(body);
                    self.frames.pop();
                }
                Stmt::ClassDef { body, .. } => {
                    let excluded = declared(body, false);
                    let mut locals: BTreeSet<String> =
                        scope_bindings(body).into_iter().map(|(n, _)| n).collect();
                    locals.retain(|n| !excluded.contains(n));
                    self.frames.push(Frame::Class(locals));
                    self.stmts(body);
                    self.frames.pop();
                }
                Stmt::Block { bodies, .. } => bodies.iter().for_each(|b| self.stmts(b)),
                _ => {}
            }
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Call(call) => {
                self.call(call);
                for c in e.children() {
                    self.expr(c);
                }
            }
            Expr::Scope { bound, children } => {
                self.frames.push(Frame::Local(bound.iter().cloned().collect()));
                children.iter().for_each(|c| self.expr(c));
                self.frames.pop();
            }
            _ => e.children().into_iter().for_each(|c| self.expr(c)),
        }
    }

    fn value(&self, e: &Expr) -> ValueDesc {
        match e {
            Expr::Str(s) => ValueDesc::StringLiteral(s.clone()),
            Expr::Name(n) => ValueDesc::NameRef {
                name: n.clone(),
                local: self.is_local(n),
            },
            Expr::Falsy => ValueDesc::Falsy,
            Expr::Starred(_) => ValueDesc::Starred,
            _ => ValueDesc::Other,
        }
    }

    fn call(&mut self, call: &Call) {
        let Some(dotted) = call.func.dotted() else {
            return;
        };
        let (head, rest) = match dotted.split_once('.') {
            Some((h, r)) => (h, Some(r)),
            None => (dotted.as_str(), None),
        };
        let Some(binding) = self.table.bindings.get(head) else {
            return;
        };
        let callee_fq = match rest {
            Some(r) => format!("{}.{r}", binding.origin),
            None => binding.origin.clone(),
        };
        let mut kwargs = BTreeMap::new();
        let mut kwargs_splat = false;
        for k in &call.keywords {
            match &k.name {
                Some(name) => {
                    kwargs.insert(name.clone(), self.value(&k.value));
                }
                None => kwargs_splat = true,
            }
        }
        self.out.push(CallSite {
            file: self.file.to_string(),
            line: call.line,
            callee_fq,
            import_form: binding.form,
            args: call.args.iter().map(|a| self.value(a)).collect(),
            kwargs,
            kwargs_splat,
        });
    }
}

/// Call sites whose callee head is bound by an import, in source order.
pub fn resolve_calls(file: &str, tree: &SyntaxTree, table: &ImportTable) -> Vec<CallSite> {
    let mut w = Walker {
        file,
        table,
        frames: Vec::new(),
        out: Vec::new(),
    };
    w.stmts(&tree.body);
    w.out
}

fn slot_value<'a>(site: &'a CallSite, sig: &Signature) -> Option<&'a ValueDesc> {
    let slot = &sig.model_arg;
    if let Some(v) = slot.keyword.as_ref().and_then(|k| site.kwargs.get(k)) {
        return Some(v);
    }
    let p = slot.position?;
    if site.args.iter().take(p + 1).any(|a| *a == ValueDesc::Starred) {
        return None;
    }
    site.args.get(p)
}

fn non_blank(s: &str) -> ModelName {
    let t = s.trim();
    if t.is_empty() {
        ModelName::Dynamic
    } else {
        ModelName::Resolved(t.to_string())
    }
}

/// Model name in `sig`'s model slot, using precomputed module constants.
pub fn model_name(site: &CallSite, sig: &Signature, consts: &ModuleConstants) -> ModelName {
    if let Some(i) = sig.model_arg.callee_segment {
        let skip = sig.library.split('.').count() + i;
        return site
            .callee_fq
            .split('.')
            .nth(skip)
            .map_or(ModelName::Dynamic, non_blank);
    }
    match slot_value(site, sig) {
        Some(ValueDesc::StringLiteral(s)) => non_blank(s),
        Some(ValueDesc::NameRef { name, local: false }) => {
            consts.get(name).map_or(ModelName::Dynamic, non_blank)
        }
        _ => ModelName::Dynamic,
    }
}

pub fn extract_model_name(site: &CallSite, sig: &Signature, tree: &SyntaxTree) -> ModelName {
    model_name(site, sig, &ModuleConstants::from_tree(tree))
}

/// False when the signature's weights keyword is absent or `None`/`False`.
pub fn loads_weights(site: &CallSite, sig: &Signature) -> bool {
    match &sig.weights_keyword {
        None => true,
        Some(k) => !matches!(site.kwargs.get(k), None | Some(ValueDesc::Falsy)),
    }
}
