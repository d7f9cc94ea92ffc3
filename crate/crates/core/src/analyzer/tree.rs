//! Syntax tree contract consumed by the analysis passes.
//!
//! Front-ends lower their native AST into this shape. Only the constructs the
//! passes need are distinguished; everything else is kept as [`Expr::Other`]
//! so nested calls stay reachable. Comments never appear in the tree.

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxTree {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportName {
    /// Dotted name as written (`os.path`, `AutoTokenizer`).
    pub name: String,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignKind {
    Plain,
    Annotated,
    Augmented,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Import {
        line: u32,
        names: Vec<ImportName>,
    },
    FromImport {
        line: u32,
        /// `None` for `from . import x`.
        module: Option<String>,
        /// Number of leading dots.
        level: u32,
        names: Vec<ImportName>,
    },
    Assign {
        line: u32,
        targets: Vec<Expr>,
        value: Option<Expr>,
        annotation: Option<Expr>,
        kind: AssignKind,
    },
    FunctionDef {
        name: String,
        params: Vec<String>,
        /// Decorators, defaults and annotations: evaluated in the enclosing scope.
        header: Vec<Expr>,
        body: Vec<Stmt>,
    },
    ClassDef {
        name: String,
        header: Vec<Expr>,
        body: Vec<Stmt>,
    },
    Global {
        names: Vec<String>,
    },
    Nonlocal {
        names: Vec<String>,
    },
    /// Compound statement: `if`, `for`, `while`, `with`, `try`, `match`, `del`.
    Block {
        header: Vec<Expr>,
        /// Binding targets (loop variables, `as` names, deleted names).
        targets: Vec<Expr>,
        bodies: Vec<Vec<Stmt>>,
    },
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub line: u32,
    pub func: Expr,
    pub args: Vec<Expr>,
    pub keywords: Vec<Keyword>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyword {
    /// `None` for `**kwargs`.
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Call(Box<Call>),
    Attribute {
        value: Box<Expr>,
        attr: String,
    },
    Name(String),
    /// A plain string literal, implicit concatenation included.
    Str(String),
    /// `None` or `False`.
    Falsy,
    Starred(Box<Expr>),
    /// Tuple or list display.
    Sequence(Vec<Expr>),
    /// `target := value`
    Walrus {
        target: String,
        value: Box<Expr>,
    },
    /// Lambda or comprehension: `bound` names are local to it.
    Scope {
        bound: Vec<String>,
        children: Vec<Expr>,
    },
    Other(Vec<Expr>),
}

impl Expr {
    /// Dotted path for a `Name`/`Attribute` chain (`a.b.c`).
    pub fn dotted(&self) -> Option<String> {
        match self {
            Expr::Name(n) => Some(n.clone()),
            Expr::Attribute { value, attr } => value.dotted().map(|h| format!("{h}.{attr}")),
            _ => None,
        }
    }

    /// Names bound when this expression is an assignment target.
    pub fn bound_names(&self, out: &mut Vec<String>) {
        match self {
            Expr::Name(n) => out.push(n.clone()),
            Expr::Starred(inner) => inner.bound_names(out),
            Expr::Sequence(items) => items.iter().for_each(|e| e.bound_names(out)),
            _ => {}
        }
    }

    /// Immediate sub-expressions.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Call(call) => {
                let mut v = vec![&call.func];
                v.extend(call.args.iter());
                v.extend(call.keywords.iter().map(|k| &k.value));
                v
            }
            Expr::Attribute { value, .. } => vec![value],
            Expr::Starred(inner) => vec![inner],
            Expr::Walrus { value, .. } => vec![value],
            Expr::Sequence(items) | Expr::Other(items) => items.iter().collect(),
            Expr::Scope { children, .. } => children.iter().collect(),
            Expr::Name(_) | Expr::Str(_) | Expr::Falsy => Vec::new(),
        }
    }
}

impl Stmt {
    /// Expressions evaluated by this statement itself (not nested bodies).
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Assign {
                targets,
                value,
                annotation,
                ..
            } => targets.iter().chain(value.iter()).chain(annotation.iter()).collect(),
            Stmt::FunctionDef { header, .. } | Stmt::ClassDef { header, .. } => header.iter().collect(),
            Stmt::Block { header, targets, .. } => header.iter().chain(targets.iter()).collect(),
            Stmt::Expr(e) => vec![e],
            Stmt::Import { .. } | Stmt::FromImport { .. } | Stmt::Global { .. } | Stmt::Nonlocal { .. } => {
                Vec::new()
            }
        }
    }

    /// Nested statement lists.
    pub fn bodies(&self) -> Vec<&[Stmt]> {
        match self {
            Stmt::FunctionDef { body, .. } | Stmt::ClassDef { body, .. } => vec![body.as_slice()],
            Stmt::Block { bodies, .. } => bodies.iter().map(Vec::as_slice).collect(),
            _ => Vec::new(),
        }
    }
}

impl SyntaxTree {
    /// All statements, depth first, in source order.
    pub fn statements(&self) -> Vec<&Stmt> {
        fn walk<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a Stmt>) {
            for s in stmts {
                out.push(s);
                for body in s.bodies() {
                    walk(body, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    /// All call nodes anywhere in the tree.
    pub fn calls(&self) -> Vec<&Call> {
        fn walk_expr<'a>(e: &'a Expr, out: &mut Vec<&'a Call>) {
            if let Expr::Call(c) = e {
                out.push(c);
            }
            for child in e.children() {
                walk_expr(child, out);
            }
        }
        let mut out = Vec::new();
        for stmt in self.statements() {
            for e in stmt.exprs() {
                walk_expr(e, &mut out);
            }
        }
        out
    }
}
