//! A compact Python 3 syntax tree.
//!
//! Only the parts the analysis consumes are kept. Annotations, type comments
//! and pattern syntax are dropped during conversion.

use std::path::PathBuf;
use std::sync::Arc;

use crate::span::{LineIndex, SourceSpan};

#[derive(Debug, Clone)]
pub struct Ast {
    pub path: PathBuf,
    pub source: Arc<str>,
    pub lines: LineIndex,
    pub span: SourceSpan,
    pub body: Vec<Stmt>,
}

impl Ast {
    /// Source text under `span`.
    pub fn text(&self, span: &SourceSpan) -> &str {
        self.lines.slice(&self.source, span).unwrap_or("")
    }
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    FunctionDef(FunctionDef),
    ClassDef(ClassDef),
    Return(Option<Expr>),
    Assign { targets: Vec<Expr>, value: Expr },
    AugAssign { target: Expr, op: String, value: Expr },
    Import(Vec<Alias>),
    ImportFrom { module: String, level: u32, names: Vec<Alias> },
    If { test: Expr, body: Vec<Stmt>, orelse: Vec<Stmt> },
    While { test: Expr, body: Vec<Stmt>, orelse: Vec<Stmt> },
    For { target: Expr, iter: Expr, body: Vec<Stmt>, orelse: Vec<Stmt> },
    With { items: Vec<WithItem>, body: Vec<Stmt> },
    Try { body: Vec<Stmt>, handlers: Vec<Handler>, orelse: Vec<Stmt>, finalbody: Vec<Stmt> },
    Assert { test: Expr, msg: Option<Expr> },
    Raise { exc: Option<Expr>, cause: Option<Expr> },
    Delete(Vec<Expr>),
    Global(Vec<String>),
    Nonlocal(Vec<String>),
    Expr(Expr),
    Pass,
    Break,
    Continue,
    /// Syntax outside the modeled subset. Child expressions and bodies are
    /// kept so their calls are still visible.
    Unsupported { what: String, exprs: Vec<Expr>, bodies: Vec<Vec<Stmt>> },
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: String,
    pub name_span: SourceSpan,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub decorators: Vec<Expr>,
    pub is_async: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Positional,
    VarArgs,
    KeywordOnly,
    VarKeywords,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub default: Option<Expr>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct ClassDef {
    pub name: String,
    pub bases: Vec<Expr>,
    pub keywords: Vec<Keyword>,
    pub body: Vec<Stmt>,
    pub decorators: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct Alias {
    pub name: String,
    pub asname: Option<String>,
}

#[derive(Debug, Clone)]
pub struct WithItem {
    pub context: Expr,
    pub target: Option<Expr>,
}

#[derive(Debug, Clone)]
pub struct Handler {
    pub kind: Option<Expr>,
    pub name: Option<String>,
    pub body: Vec<Stmt>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct Keyword {
    /// `None` for `**mapping` arguments.
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    None,
    Bool(bool),
    Str,
    Bytes,
    Int,
    Float,
    Complex,
    Ellipsis,
}

impl Constant {
    /// Python type name of the literal.
    pub fn type_name(&self) -> &'static str {
        match self {
            Constant::None => "NoneType",
            Constant::Bool(_) => "bool",
            Constant::Str => "str",
            Constant::Bytes => "bytes",
            Constant::Int => "int",
            Constant::Float => "float",
            Constant::Complex => "complex",
            Constant::Ellipsis => "ellipsis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompKind {
    List,
    Set,
    Dict,
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionKind {
    Tuple,
    List,
    Set,
    Dict,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub target: Expr,
    pub iter: Expr,
    pub ifs: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Name(String),
    Constant(Constant),
    Attribute { value: Box<Expr>, attr: String },
    Subscript { value: Box<Expr>, index: Box<Expr> },
    Call { func: Box<Expr>, args: Vec<Expr>, keywords: Vec<Keyword> },
    BinOp { left: Box<Expr>, op: String, right: Box<Expr> },
    UnaryOp { op: String, operand: Box<Expr> },
    BoolOp { op: String, values: Vec<Expr> },
    Compare { left: Box<Expr>, ops: Vec<String>, comparators: Vec<Expr> },
    Lambda { params: Vec<Param>, body: Box<Expr> },
    IfExp { test: Box<Expr>, body: Box<Expr>, orelse: Box<Expr> },
    Collection { kind: CollectionKind, items: Vec<Expr> },
    /// Dict displays keep keys and values interleaved in `Collection`; this
    /// variant is for comprehensions. `value` is set for dict comprehensions.
    Comprehension { kind: CompKind, elt: Box<Expr>, value: Option<Box<Expr>>, generators: Vec<Generator> },
    Starred(Box<Expr>),
    Slice(Vec<Expr>),
    FString(Vec<Expr>),
    Await(Box<Expr>),
    Yield(Option<Box<Expr>>),
    NamedExpr { target: Box<Expr>, value: Box<Expr> },
}

impl Expr {
    /// Direct sub-expressions, in source order.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Name(_) | ExprKind::Constant(_) => vec![],
            ExprKind::Attribute { value, .. } => vec![value],
            ExprKind::Subscript { value, index } => vec![value, index],
            ExprKind::Call { func, args, keywords } => {
                let mut out: Vec<&Expr> = vec![func];
                out.extend(args.iter());
                out.extend(keywords.iter().map(|k| &k.value));
                out.sort_by(|a, b| a.span.start().cmp(&b.span.start()));
                out
            }
            ExprKind::BinOp { left, right, .. } => vec![left, right],
            ExprKind::UnaryOp { operand, .. } => vec![operand],
            ExprKind::BoolOp { values, .. } => values.iter().collect(),
            ExprKind::Compare { left, comparators, .. } => {
                std::iter::once(&**left).chain(comparators.iter()).collect()
            }
            ExprKind::Lambda { params, body } => params
                .iter()
                .filter_map(|p| p.default.as_ref())
                .chain(std::iter::once(&**body))
                .collect(),
            ExprKind::IfExp { test, body, orelse } => vec![body, test, orelse],
            ExprKind::Collection { items, .. } | ExprKind::Slice(items) | ExprKind::FString(items) => {
                items.iter().collect()
            }
            ExprKind::Comprehension { elt, value, generators, .. } => {
                let mut out: Vec<&Expr> = vec![elt];
                if let Some(v) = value {
                    out.push(v);
                }
                for g in generators {
                    out.push(&g.target);
                    out.push(&g.iter);
                    out.extend(g.ifs.iter());
                }
                out
            }
            ExprKind::Starred(e) | ExprKind::Await(e) => vec![e],
            ExprKind::Yield(e) => e.iter().map(|b| &**b).collect(),
            ExprKind::NamedExpr { target, value } => vec![target, value],
        }
    }
}

impl Stmt {
    /// Expressions that belong directly to this statement (not to nested
    /// statement bodies).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::FunctionDef(f) => f
                .decorators
                .iter()
                .chain(f.params.iter().filter_map(|p| p.default.as_ref()))
                .collect(),
            StmtKind::ClassDef(c) => c
                .decorators
                .iter()
                .chain(c.bases.iter())
                .chain(c.keywords.iter().map(|k| &k.value))
                .collect(),
            StmtKind::Return(e) => e.iter().collect(),
            StmtKind::Assign { targets, value } => targets.iter().chain(std::iter::once(value)).collect(),
            StmtKind::AugAssign { target, value, .. } => vec![target, value],
            StmtKind::If { test, .. } | StmtKind::While { test, .. } => vec![test],
            StmtKind::For { target, iter, .. } => vec![target, iter],
            StmtKind::With { items, .. } => items
                .iter()
                .flat_map(|i| std::iter::once(&i.context).chain(i.target.iter()))
                .collect(),
            StmtKind::Try { handlers, .. } => handlers.iter().filter_map(|h| h.kind.as_ref()).collect(),
            StmtKind::Assert { test, msg } => std::iter::once(test).chain(msg.iter()).collect(),
            StmtKind::Raise { exc, cause } => exc.iter().chain(cause.iter()).collect(),
            StmtKind::Delete(es) => es.iter().collect(),
            StmtKind::Expr(e) => vec![e],
            StmtKind::Unsupported { exprs, .. } => exprs.iter().collect(),
            StmtKind::Import(_)
            | StmtKind::ImportFrom { .. }
            | StmtKind::Global(_)
            | StmtKind::Nonlocal(_)
            | StmtKind::Pass
            | StmtKind::Break
            | StmtKind::Continue => vec![],
        }
    }

    /// Nested statement bodies.
    pub fn bodies(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::FunctionDef(f) => vec![&f.body],
            StmtKind::ClassDef(c) => vec![&c.body],
            StmtKind::If { body, orelse, .. }
            | StmtKind::While { body, orelse, .. }
            | StmtKind::For { body, orelse, .. } => vec![body, orelse],
            StmtKind::With { body, .. } => vec![body],
            StmtKind::Try { body, handlers, orelse, finalbody } => {
                let mut out: Vec<&[Stmt]> = vec![body];
                out.extend(handlers.iter().map(|h| h.body.as_slice()));
                out.push(orelse);
                out.push(finalbody);
                out
            }
            StmtKind::Unsupported { bodies, .. } => bodies.iter().map(|b| b.as_slice()).collect(),
            _ => vec![],
        }
    }
}

/// Visit every expression in `stmts` in pre-order, descending into nested
/// statement bodies and sub-expressions.
pub fn walk_exprs<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    fn expr<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
        f(e);
        for c in e.children() {
            expr(c, f);
        }
    }
    for s in stmts {
        for e in s.exprs() {
            expr(e, f);
        }
        for b in s.bodies() {
            walk_exprs(b, f);
        }
    }
}
