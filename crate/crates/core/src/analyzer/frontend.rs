//! Parser front-ends.
//!
//! The shipped front-end parses with `rustpython-parser` and lowers its AST to
//! the [`SyntaxTree`] contract.

use rustpython_parser::ast::{self, Ranged};
use rustpython_parser::Parse;

use super::tree::{AssignKind, Call, Expr, ImportName, Keyword, Stmt, SyntaxTree};
use crate::strategy::StrategyRegistry;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    /// 1-based.
    pub line: u32,
    /// 1-based, in characters.
    pub column: u32,
    pub message: String,
}

impl std::fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "syntax error at {}:{}: {}", self.line, self.column, self.message)
    }
}

pub trait SourceFrontend: Send + Sync {
    fn parse(&self, path: &str, text: &str) -> Result<SyntaxTree, SyntaxError>;
}

pub const DEFAULT_FRONTEND: &str = "rustpython";

pub fn frontends() -> StrategyRegistry<dyn SourceFrontend> {
    let mut reg: StrategyRegistry<dyn SourceFrontend> = StrategyRegistry::new("parser front-end");
    reg.register(DEFAULT_FRONTEND, Box::new(RustPythonFrontend));
    reg
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RustPythonFrontend;

impl SourceFrontend for RustPythonFrontend {
    fn parse(&self, path: &str, text: &str) -> Result<SyntaxTree, SyntaxError> {
        let lines = LineIndex::new(text);
        let suite = ast::Suite::parse(text, path).map_err(|e| {
            let offset = u32::from(e.offset) as usize;
            let (line, column) = lines.position(text, offset);
            SyntaxError {
                line,
                column,
                message: e.error.to_string(),
            }
        })?;
        let lower = Lower { lines: &lines };
        Ok(SyntaxTree {
            body: lower.stmts(&suite),
        })
    }
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    fn line(&self, offset: usize) -> u32 {
        let idx = match self.starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        idx as u32 + 1
    }

    fn position(&self, text: &str, offset: usize) -> (u32, u32) {
        let line = self.line(offset);
        let start = self.starts[line as usize - 1];
        let end = offset.min(text.len());
        let column = text.get(start..end).map_or(0, |s| s.chars().count()) as u32 + 1;
        (line, column)
    }
}

struct Lower<'a> {
    lines: &'a LineIndex,
}

impl Lower<'_> {
    fn line_of(&self, node: &impl Ranged) -> u32 {
        self.lines.line(u32::from(node.range().start()) as usize)
    }

    fn stmts(&self, stmts: &[ast::Stmt]) -> Vec<Stmt> {
        stmts.iter().map(|s| self.stmt(s)).collect()
    }

    fn exprs(&self, exprs: &[ast::Expr]) -> Vec<Expr> {
        exprs.iter().map(|e| self.expr(e)).collect()
    }

    fn opt(&self, e: &Option<Box<ast::Expr>>) -> Vec<Expr> {
        e.iter().map(|e| self.expr(e)).collect()
    }

    fn block(&self, header: Vec<Expr>, targets: Vec<Expr>, bodies: Vec<&[ast::Stmt]>) -> Stmt {
        Stmt::Block {
            header,
            targets,
            bodies: bodies.into_iter().map(|b| self.stmts(b)).collect(),
        }
    }

    fn aliases(names: &[ast::Alias]) -> Vec<ImportName> {
        names
            .iter()
            .map(|a| ImportName {
                name: a.name.to_string(),
                alias: a.asname.as_ref().map(|n| n.to_string()),
            })
            .collect()
    }

    fn function(
        &self,
        name: &ast::Identifier,
        args: &ast::Arguments,
        body: &[ast::Stmt],
        decorators: &[ast::Expr],
        returns: &Option<Box<ast::Expr>>,
    ) -> Stmt {
        let (params, mut header) = self.arguments(args);
        header.extend(self.exprs(decorators));
        header.extend(self.opt(returns));
        Stmt::FunctionDef {
            name: name.to_string(),
            params,
            header,
            body: self.stmts(body),
        }
    }

    /// Parameter names plus defaults and annotations.
    fn arguments(&self, args: &ast::Arguments) -> (Vec<String>, Vec<Expr>) {
        let mut params = Vec::new();
        let mut header = Vec::new();
        for a in args.posonlyargs.iter().chain(&args.args).chain(&args.kwonlyargs) {
            params.push(a.def.arg.to_string());
            header.extend(self.opt(&a.def.annotation));
            header.extend(self.opt(&a.default));
        }
        for a in args.vararg.iter().chain(args.kwarg.iter()) {
            params.push(a.arg.to_string());
            header.extend(self.opt(&a.annotation));
        }
        (params, header)
    }

    fn stmt(&self, s: &ast::Stmt) -> Stmt {
        use ast::Stmt as S;
        match s {
            S::FunctionDef(f) => self.function(&f.name, &f.args, &f.body, &f.decorator_list, &f.returns),
            S::AsyncFunctionDef(f) => {
                self.function(&f.name, &f.args, &f.body, &f.decorator_list, &f.returns)
            }
            S::ClassDef(c) => {
                let mut header = self.exprs(&c.bases);
                header.extend(c.keywords.iter().map(|k| self.expr(&k.value)));
                header.extend(self.exprs(&c.decorator_list));
                Stmt::ClassDef {
                    name: c.name.to_string(),
                    header,
                    body: self.stmts(&c.body),
                }
            }
            S::Return(r) => Stmt::Expr(Expr::Other(self.opt(&r.value))),
            S::Delete(d) => self.block(Vec::new(), self.exprs(&d.targets), Vec::new()),
            S::Assign(a) => Stmt::Assign {
                line: self.line_of(a),
                targets: self.exprs(&a.targets),
                value: Some(self.expr(&a.value)),
                annotation: None,
                kind: AssignKind::Plain,
            },
            S::TypeAlias(t) => Stmt::Assign {
                line: self.line_of(t),
                targets: vec![self.expr(&t.name)],
                value: Some(Expr::Other(vec![self.expr(&t.value)])),
                annotation: None,
                kind: AssignKind::Plain,
            },
            S::AugAssign(a) => Stmt::Assign {
                line: self.line_of(a),
                targets: vec![self.expr(&a.target)],
                value: Some(self.expr(&a.value)),
                annotation: None,
                kind: AssignKind::Augmented,
            },
            S::AnnAssign(a) => match &a.value {
                // A bare annotation binds nothing.
                None => Stmt::Expr(Expr::Other(vec![self.expr(&a.annotation)])),
                Some(value) => Stmt::Assign {
                    line: self.line_of(a),
                    targets: vec![self.expr(&a.target)],
                    value: Some(self.expr(value)),
                    annotation: Some(self.expr(&a.annotation)),
                    kind: AssignKind::Annotated,
                },
            },
            S::For(f) => self.block(
                vec![self.expr(&f.iter)],
                vec![self.expr(&f.target)],
                vec![&f.body, &f.orelse],
            ),
            S::AsyncFor(f) => self.block(
                vec![self.expr(&f.iter)],
                vec![self.expr(&f.target)],
                vec![&f.body, &f.orelse],
            ),
            S::While(w) => self.block(vec![self.expr(&w.test)], Vec::new(), vec![&w.body, &w.orelse]),
            S::If(i) => self.block(vec![self.expr(&i.test)], Vec::new(), vec![&i.body, &i.orelse]),
            S::With(w) => self.with(&w.items, &w.body),
            S::AsyncWith(w) => self.with(&w.items, &w.body),
            S::Match(m) => {
                let mut header = vec![self.expr(&m.subject)];
                let mut targets = Vec::new();
                for case in &m.cases {
                    self.pattern(&case.pattern, &mut header, &mut targets);
                    header.extend(self.opt(&case.guard));
                }
                self.block(header, targets, m.cases.iter().map(|c| c.body.as_slice()).collect())
            }
            S::Raise(r) => {
                let mut v = self.opt(&r.exc);
                v.extend(self.opt(&r.cause));
                Stmt::Expr(Expr::Other(v))
            }
            S::Try(t) => self.try_stmt(&t.body, &t.handlers, &t.orelse, &t.finalbody),
            S::TryStar(t) => self.try_stmt(&t.body, &t.handlers, &t.orelse, &t.finalbody),
            S::Assert(a) => {
                let mut v = vec![self.expr(&a.test)];
                v.extend(self.opt(&a.msg));
                Stmt::Expr(Expr::Other(v))
            }
            S::Import(i) => Stmt::Import {
                line: self.line_of(i),
                names: Self::aliases(&i.names),
            },
            S::ImportFrom(i) => Stmt::FromImport {
                line: self.line_of(i),
                module: i.module.as_ref().map(|m| m.to_string()),
                level: i.level.as_ref().map_or(0, |l| l.to_u32()),
                names: Self::aliases(&i.names),
            },
            S::Global(g) => Stmt::Global {
                names: g.names.iter().map(|n| n.to_string()).collect(),
            },
            S::Nonlocal(n) => Stmt::Nonlocal {
                names: n.names.iter().map(|n| n.to_string()).collect(),
            },
            S::Expr(e) => Stmt::Expr(self.expr(&e.value)),
            S::Pass(_) | S::Break(_) | S::Continue(_) => Stmt::Expr(Expr::Other(Vec::new())),
        }
    }

    fn with(&self, items: &[ast::WithItem], body: &[ast::Stmt]) -> Stmt {
        let header = items.iter().map(|i| self.expr(&i.context_expr)).collect();
        let targets = items
            .iter()
            .filter_map(|i| i.optional_vars.as_ref().map(|v| self.expr(v)))
            .collect();
        self.block(header, targets, vec![body])
    }

    fn try_stmt(
        &self,
        body: &[ast::Stmt],
        handlers: &[ast::ExceptHandler],
        orelse: &[ast::Stmt],
        finalbody: &[ast::Stmt],
    ) -> Stmt {
        let mut header = Vec::new();
        let mut targets = Vec::new();
        let mut bodies: Vec<&[ast::Stmt]> = vec![body];
        for h in handlers {
            let ast::ExceptHandler::ExceptHandler(h) = h;
            header.extend(self.opt(&h.type_));
            if let Some(name) = &h.name {
                targets.push(Expr::Name(name.to_string()));
            }
            bodies.push(&h.body);
        }
        bodies.push(orelse);
        bodies.push(finalbody);
        self.block(header, targets, bodies)
    }

    fn pattern(&self, p: &ast::Pattern, header: &mut Vec<Expr>, targets: &mut Vec<Expr>) {
        use ast::Pattern as P;
        match p {
            P::MatchValue(v) => header.push(self.expr(&v.value)),
            P::MatchSingleton(_) => {}
            P::MatchSequence(s) => s.patterns.iter().for_each(|p| self.pattern(p, header, targets)),
            P::MatchMapping(m) => {
                header.extend(self.exprs(&m.keys));
                m.patterns.iter().for_each(|p| self.pattern(p, header, targets));
                if let Some(rest) = &m.rest {
                    targets.push(Expr::Name(rest.to_string()));
                }
            }
            P::MatchClass(c) => {
                header.push(self.expr(&c.cls));
                c.patterns
                    .iter()
                    .chain(&c.kwd_patterns)
                    .for_each(|p| self.pattern(p, header, targets));
            }
            P::MatchStar(s) => targets.extend(s.name.iter().map(|n| Expr::Name(n.to_string()))),
            P::MatchAs(a) => {
                if let Some(inner) = &a.pattern {
                    self.pattern(inner, header, targets);
                }
                targets.extend(a.name.iter().map(|n| Expr::Name(n.to_string())));
            }
            P::MatchOr(o) => o.patterns.iter().for_each(|p| self.pattern(p, header, targets)),
        }
    }

    fn comprehension(&self, elts: Vec<Expr>, generators: &[ast::Comprehension]) -> Expr {
        let mut bound = Vec::new();
        let mut children = elts;
        for g in generators {
            self.expr(&g.target).bound_names(&mut bound);
            children.push(self.expr(&g.iter));
            children.extend(self.exprs(&g.ifs));
        }
        Expr::Scope { bound, children }
    }

    fn expr(&self, e: &ast::Expr) -> Expr {
        use ast::Expr as E;
        match e {
            E::Call(c) => Expr::Call(Box::new(Call {
                line: self.line_of(c),
                func: self.expr(&c.func),
                args: self.exprs(&c.args),
                keywords: c
                    .keywords
                    .iter()
                    .map(|k| Keyword {
                        name: k.arg.as_ref().map(|a| a.to_string()),
                        value: self.expr(&k.value),
                    })
                    .collect(),
            })),
            E::Attribute(a) => Expr::Attribute {
                value: Box::new(self.expr(&a.value)),
                attr: a.attr.to_string(),
            },
            E::Name(n) => Expr::Name(n.id.to_string()),
            E::Constant(c) => match &c.value {
                ast::Constant::Str(s) => Expr::Str(s.clone()),
                ast::Constant::None | ast::Constant::Bool(false) => Expr::Falsy,
                _ => Expr::Other(Vec::new()),
            },
            E::Starred(s) => Expr::Starred(Box::new(self.expr(&s.value))),
            E::List(l) => Expr::Sequence(self.exprs(&l.elts)),
            E::Tuple(t) => Expr::Sequence(self.exprs(&t.elts)),
            E::NamedExpr(n) => match self.expr(&n.target) {
                Expr::Name(target) => Expr::Walrus {
                    target,
                    value: Box::new(self.expr(&n.value)),
                },
                other => Expr::Other(vec![other, self.expr(&n.value)]),
            },
            E::Lambda(l) => {
                let (bound, defaults) = self.arguments(&l.args);
                let mut v = defaults;
                v.push(Expr::Scope {
                    bound,
                    children: vec![self.expr(&l.body)],
                });
                Expr::Other(v)
            }
            E::ListComp(c) => self.comprehension(vec![self.expr(&c.elt)], &c.generators),
            E::SetComp(c) => self.comprehension(vec![self.expr(&c.elt)], &c.generators),
            E::GeneratorExp(c) => self.comprehension(vec![self.expr(&c.elt)], &c.generators),
            E::DictComp(c) => {
                self.comprehension(vec![self.expr(&c.key), self.expr(&c.value)], &c.generators)
            }
            E::BoolOp(b) => Expr::Other(self.exprs(&b.values)),
            E::BinOp(b) => Expr::Other(vec![self.expr(&b.left), self.expr(&b.right)]),
            E::UnaryOp(u) => Expr::Other(vec![self.expr(&u.operand)]),
            E::IfExp(i) => Expr::Other(vec![self.expr(&i.test), self.expr(&i.body), self.expr(&i.orelse)]),
            E::Dict(d) => {
                let mut v: Vec<Expr> = d.keys.iter().flatten().map(|k| self.expr(k)).collect();
                v.extend(self.exprs(&d.values));
                Expr::Other(v)
            }
            E::Set(s) => Expr::Other(self.exprs(&s.elts)),
            E::Await(a) => Expr::Other(vec![self.expr(&a.value)]),
            E::Yield(y) => Expr::Other(self.opt(&y.value)),
            E::YieldFrom(y) => Expr::Other(vec![self.expr(&y.value)]),
            E::Compare(c) => {
                let mut v = vec![self.expr(&c.left)];
                v.extend(self.exprs(&c.comparators));
                Expr::Other(v)
            }
            E::FormattedValue(f) => {
                let mut v = vec![self.expr(&f.value)];
                v.extend(self.opt(&f.format_spec));
                Expr::Other(v)
            }
            E::JoinedStr(j) => Expr::Other(self.exprs(&j.values)),
            E::Subscript(s) => Expr::Other(vec![self.expr(&s.value), self.expr(&s.slice)]),
            E::Slice(s) => {
                let mut v = self.opt(&s.lower);
                v.extend(self.opt(&s.upper));
                v.extend(self.opt(&s.step));
                Expr::Other(v)
            }
        }
    }
}
