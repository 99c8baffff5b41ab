//! Conversion from the `rustpython-parser` tree into [`Ast`].

use std::path::Path;
use std::sync::Arc;

use rustpython_parser::ast::{self as py, Ranged};
use rustpython_parser::text_size::TextRange;
use rustpython_parser::Parse;
use serde::{Deserialize, Serialize};

use super::ast::*;
use super::FrontendError;
use crate::span::{LineIndex, Position, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

/// Parse raw bytes. Non-UTF-8 input is rejected before parsing.
pub fn parse_module(bytes: &[u8], path: &Path) -> Result<Ast, FrontendError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FrontendError::Encoding {
        path: path.to_path_buf(),
        offset: e.valid_up_to(),
    })?;
    parse_source(text, path)
}

pub fn parse_source(text: &str, path: &Path) -> Result<Ast, FrontendError> {
    let file: Arc<str> = Arc::from(path.to_string_lossy().as_ref());
    let lines = LineIndex::new(text);
    let suite = py::Suite::parse(text, &file).map_err(|e| {
        let pos = lines.position(e.offset.to_usize());
        FrontendError::Syntax {
            path: path.to_path_buf(),
            diagnostics: vec![Diagnostic { line: pos.line, col: pos.col, message: e.error.to_string() }],
        }
    })?;
    let conv = Converter { file: file.clone(), lines: &lines, text };
    let body = conv.stmts(suite);
    let span = SourceSpan::new(file, Position::new(1, 1), lines.position(text.len()));
    Ok(Ast { path: path.to_path_buf(), source: Arc::from(text), lines, span, body })
}

struct Converter<'a> {
    file: Arc<str>,
    lines: &'a LineIndex,
    text: &'a str,
}

fn op_text(op: &py::Operator) -> &'static str {
    use py::Operator::*;
    match op {
        Add => "+",
        Sub => "-",
        Mult => "*",
        MatMult => "@",
        Div => "/",
        Mod => "%",
        Pow => "**",
        LShift => "<<",
        RShift => ">>",
        BitOr => "|",
        BitXor => "^",
        BitAnd => "&",
        FloorDiv => "//",
    }
}

fn cmp_text(op: &py::CmpOp) -> &'static str {
    use py::CmpOp::*;
    match op {
        Eq => "==",
        NotEq => "!=",
        Lt => "<",
        LtE => "<=",
        Gt => ">",
        GtE => ">=",
        Is => "is",
        IsNot => "is not",
        In => "in",
        NotIn => "not in",
    }
}

impl<'a> Converter<'a> {
    fn span(&self, range: TextRange) -> SourceSpan {
        SourceSpan::new(
            self.file.clone(),
            self.lines.position(range.start().to_usize()),
            self.lines.position(range.end().to_usize()),
        )
    }

    fn stmts(&self, stmts: Vec<py::Stmt>) -> Vec<Stmt> {
        stmts.into_iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&self, stmt: py::Stmt) -> Stmt {
        let range = stmt.range();
        let mut span = self.span(range);
        let kind = match stmt {
            py::Stmt::FunctionDef(f) => {
                let name_span = self.def_name_span(range, &f.name);
                let decorators = self.exprs(f.decorator_list);
                span = self.widen_for_decorators(span, &decorators);
                StmtKind::FunctionDef(FunctionDef {
                    name: f.name.to_string(),
                    name_span,
                    params: self.params(*f.args),
                    body: self.stmts(f.body),
                    decorators,
                    is_async: false,
                })
            }
            py::Stmt::AsyncFunctionDef(f) => {
                let name_span = self.def_name_span(range, &f.name);
                let decorators = self.exprs(f.decorator_list);
                span = self.widen_for_decorators(span, &decorators);
                StmtKind::FunctionDef(FunctionDef {
                    name: f.name.to_string(),
                    name_span,
                    params: self.params(*f.args),
                    body: self.stmts(f.body),
                    decorators,
                    is_async: true,
                })
            }
            py::Stmt::ClassDef(c) => {
                let decorators = self.exprs(c.decorator_list);
                span = self.widen_for_decorators(span, &decorators);
                StmtKind::ClassDef(ClassDef {
                    name: c.name.to_string(),
                    bases: self.exprs(c.bases),
                    keywords: self.keywords(c.keywords),
                    body: self.stmts(c.body),
                    decorators,
                })
            }
            py::Stmt::Return(r) => StmtKind::Return(r.value.map(|v| self.expr(*v))),
            py::Stmt::Delete(d) => StmtKind::Delete(self.exprs(d.targets)),
            py::Stmt::Assign(a) => StmtKind::Assign { targets: self.exprs(a.targets), value: self.expr(*a.value) },
            py::Stmt::AugAssign(a) => StmtKind::AugAssign {
                target: self.expr(*a.target),
                op: op_text(&a.op).to_string(),
                value: self.expr(*a.value),
            },
            py::Stmt::AnnAssign(a) => match a.value {
                Some(v) => StmtKind::Assign { targets: vec![self.expr(*a.target)], value: self.expr(*v) },
                None => StmtKind::Pass,
            },
            py::Stmt::TypeAlias(t) => StmtKind::Unsupported {
                what: "type alias".into(),
                exprs: vec![self.expr(*t.value)],
                bodies: vec![],
            },
            py::Stmt::For(f) => StmtKind::For {
                target: self.expr(*f.target),
                iter: self.expr(*f.iter),
                body: self.stmts(f.body),
                orelse: self.stmts(f.orelse),
            },
            py::Stmt::AsyncFor(f) => StmtKind::For {
                target: self.expr(*f.target),
                iter: self.expr(*f.iter),
                body: self.stmts(f.body),
                orelse: self.stmts(f.orelse),
            },
            py::Stmt::While(w) => StmtKind::While {
                test: self.expr(*w.test),
                body: self.stmts(w.body),
                orelse: self.stmts(w.orelse),
            },
            py::Stmt::If(i) => StmtKind::If {
                test: self.expr(*i.test),
                body: self.stmts(i.body),
                orelse: self.stmts(i.orelse),
            },
            py::Stmt::With(w) => StmtKind::With { items: self.with_items(w.items), body: self.stmts(w.body) },
            py::Stmt::AsyncWith(w) => StmtKind::With { items: self.with_items(w.items), body: self.stmts(w.body) },
            py::Stmt::Match(m) => {
                let mut exprs = vec![self.expr(*m.subject)];
                let mut bodies = Vec::new();
                for case in m.cases {
                    if let Some(g) = case.guard {
                        exprs.push(self.expr(*g));
                    }
                    bodies.push(self.stmts(case.body));
                }
                StmtKind::Unsupported { what: "match".into(), exprs, bodies }
            }
            py::Stmt::Raise(r) => StmtKind::Raise {
                exc: r.exc.map(|e| self.expr(*e)),
                cause: r.cause.map(|e| self.expr(*e)),
            },
            py::Stmt::Try(t) => self.try_stmt(t.body, t.handlers, t.orelse, t.finalbody),
            py::Stmt::TryStar(t) => self.try_stmt(t.body, t.handlers, t.orelse, t.finalbody),
            py::Stmt::Assert(a) => StmtKind::Assert {
                test: self.expr(*a.test),
                msg: a.msg.map(|m| self.expr(*m)),
            },
            py::Stmt::Import(i) => StmtKind::Import(self.aliases(i.names)),
            py::Stmt::ImportFrom(i) => StmtKind::ImportFrom {
                module: i.module.map(|m| m.to_string()).unwrap_or_default(),
                level: i.level.map(|l| l.to_u32()).unwrap_or(0),
                names: self.aliases(i.names),
            },
            py::Stmt::Global(g) => StmtKind::Global(g.names.into_iter().map(|n| n.to_string()).collect()),
            py::Stmt::Nonlocal(n) => StmtKind::Nonlocal(n.names.into_iter().map(|n| n.to_string()).collect()),
            py::Stmt::Expr(e) => StmtKind::Expr(self.expr(*e.value)),
            py::Stmt::Pass(_) => StmtKind::Pass,
            py::Stmt::Break(_) => StmtKind::Break,
            py::Stmt::Continue(_) => StmtKind::Continue,
        };
        Stmt { kind, span }
    }

    fn try_stmt(
        &self,
        body: Vec<py::Stmt>,
        handlers: Vec<py::ExceptHandler>,
        orelse: Vec<py::Stmt>,
        finalbody: Vec<py::Stmt>,
    ) -> StmtKind {
        StmtKind::Try {
            body: self.stmts(body),
            handlers: handlers
                .into_iter()
                .map(|h| {
                    let py::ExceptHandler::ExceptHandler(h) = h;
                    Handler {
                        span: self.span(h.range),
                        kind: h.type_.map(|t| self.expr(*t)),
                        name: h.name.map(|n| n.to_string()),
                        body: self.stmts(h.body),
                    }
                })
                .collect(),
            orelse: self.stmts(orelse),
            finalbody: self.stmts(finalbody),
        }
    }

    /// Span of the function name following `def`.
    fn def_name_span(&self, range: TextRange, name: &str) -> SourceSpan {
        let start = range.start().to_usize();
        let end = range.end().to_usize().min(self.text.len());
        let head = &self.text[start..end];
        let after_def = head.find("def").map(|i| i + 3).unwrap_or(0);
        let at = head[after_def..].find(name).map(|i| start + after_def + i).unwrap_or(start);
        SourceSpan::new(self.file.clone(), self.lines.position(at), self.lines.position(at + name.len()))
    }

    fn widen_for_decorators(&self, span: SourceSpan, decorators: &[Expr]) -> SourceSpan {
        match decorators.first() {
            Some(d) => {
                // Include the '@' that precedes the first decorator expression.
                let at = Position::new(d.span.start_line, d.span.start_col.saturating_sub(1).max(1));
                SourceSpan::new(span.file.clone(), at.min(span.start()), span.end())
            }
            None => span,
        }
    }

    fn aliases(&self, names: Vec<py::Alias>) -> Vec<Alias> {
        names
            .into_iter()
            .map(|a| Alias { name: a.name.to_string(), asname: a.asname.map(|n| n.to_string()) })
            .collect()
    }

    fn with_items(&self, items: Vec<py::WithItem>) -> Vec<WithItem> {
        items
            .into_iter()
            .map(|i| WithItem { context: self.expr(i.context_expr), target: i.optional_vars.map(|v| self.expr(*v)) })
            .collect()
    }

    fn params(&self, args: py::Arguments) -> Vec<Param> {
        let mut out = Vec::new();
        for a in args.posonlyargs.into_iter().chain(args.args) {
            out.push(Param {
                name: a.def.arg.to_string(),
                kind: ParamKind::Positional,
                span: self.span(a.def.range),
                default: a.default.map(|d| self.expr(*d)),
            });
        }
        if let Some(v) = args.vararg {
            out.push(Param { name: v.arg.to_string(), kind: ParamKind::VarArgs, span: self.span(v.range), default: None });
        }
        for a in args.kwonlyargs {
            out.push(Param {
                name: a.def.arg.to_string(),
                kind: ParamKind::KeywordOnly,
                span: self.span(a.def.range),
                default: a.default.map(|d| self.expr(*d)),
            });
        }
        if let Some(k) = args.kwarg {
            out.push(Param {
                name: k.arg.to_string(),
                kind: ParamKind::VarKeywords,
                span: self.span(k.range),
                default: None,
            });
        }
        out
    }

    fn keywords(&self, kws: Vec<py::Keyword>) -> Vec<Keyword> {
        kws.into_iter()
            .map(|k| Keyword { name: k.arg.map(|a| a.to_string()), value: self.expr(k.value) })
            .collect()
    }

    fn exprs(&self, es: Vec<py::Expr>) -> Vec<Expr> {
        es.into_iter().map(|e| self.expr(e)).collect()
    }

    fn generators(&self, gens: Vec<py::Comprehension>) -> Vec<Generator> {
        gens.into_iter()
            .map(|g| Generator { target: self.expr(g.target), iter: self.expr(g.iter), ifs: self.exprs(g.ifs) })
            .collect()
    }

    fn expr(&self, e: py::Expr) -> Expr {
        let span = self.span(e.range());
        let kind = match e {
            py::Expr::BoolOp(b) => ExprKind::BoolOp {
                op: match b.op {
                    py::BoolOp::And => "and",
                    py::BoolOp::Or => "or",
                }
                .to_string(),
                values: self.exprs(b.values),
            },
            py::Expr::NamedExpr(n) => ExprKind::NamedExpr {
                target: Box::new(self.expr(*n.target)),
                value: Box::new(self.expr(*n.value)),
            },
            py::Expr::BinOp(b) => ExprKind::BinOp {
                left: Box::new(self.expr(*b.left)),
                op: op_text(&b.op).to_string(),
                right: Box::new(self.expr(*b.right)),
            },
            py::Expr::UnaryOp(u) => ExprKind::UnaryOp {
                op: match u.op {
                    py::UnaryOp::Invert => "~",
                    py::UnaryOp::Not => "not",
                    py::UnaryOp::UAdd => "+",
                    py::UnaryOp::USub => "-",
                }
                .to_string(),
                operand: Box::new(self.expr(*u.operand)),
            },
            py::Expr::Lambda(l) => ExprKind::Lambda { params: self.params(*l.args), body: Box::new(self.expr(*l.body)) },
            py::Expr::IfExp(i) => ExprKind::IfExp {
                test: Box::new(self.expr(*i.test)),
                body: Box::new(self.expr(*i.body)),
                orelse: Box::new(self.expr(*i.orelse)),
            },
            py::Expr::Dict(d) => {
                let mut items = Vec::new();
                for (k, v) in d.keys.into_iter().zip(d.values) {
                    if let Some(k) = k {
                        items.push(self.expr(k));
                    }
                    items.push(self.expr(v));
                }
                ExprKind::Collection { kind: CollectionKind::Dict, items }
            }
            py::Expr::Set(s) => ExprKind::Collection { kind: CollectionKind::Set, items: self.exprs(s.elts) },
            py::Expr::List(l) => ExprKind::Collection { kind: CollectionKind::List, items: self.exprs(l.elts) },
            py::Expr::Tuple(t) => ExprKind::Collection { kind: CollectionKind::Tuple, items: self.exprs(t.elts) },
            py::Expr::ListComp(c) => ExprKind::Comprehension {
                kind: CompKind::List,
                elt: Box::new(self.expr(*c.elt)),
                value: None,
                generators: self.generators(c.generators),
            },
            py::Expr::SetComp(c) => ExprKind::Comprehension {
                kind: CompKind::Set,
                elt: Box::new(self.expr(*c.elt)),
                value: None,
                generators: self.generators(c.generators),
            },
            py::Expr::GeneratorExp(c) => ExprKind::Comprehension {
                kind: CompKind::Generator,
                elt: Box::new(self.expr(*c.elt)),
                value: None,
                generators: self.generators(c.generators),
            },
            py::Expr::DictComp(c) => ExprKind::Comprehension {
                kind: CompKind::Dict,
                elt: Box::new(self.expr(*c.key)),
                value: Some(Box::new(self.expr(*c.value))),
                generators: self.generators(c.generators),
            },
            py::Expr::Await(a) => ExprKind::Await(Box::new(self.expr(*a.value))),
            py::Expr::Yield(y) => ExprKind::Yield(y.value.map(|v| Box::new(self.expr(*v)))),
            py::Expr::YieldFrom(y) => ExprKind::Yield(Some(Box::new(self.expr(*y.value)))),
            py::Expr::Compare(c) => ExprKind::Compare {
                left: Box::new(self.expr(*c.left)),
                ops: c.ops.iter().map(|o| cmp_text(o).to_string()).collect(),
                comparators: self.exprs(c.comparators),
            },
            py::Expr::Call(c) => ExprKind::Call {
                func: Box::new(self.expr(*c.func)),
                args: self.exprs(c.args),
                keywords: self.keywords(c.keywords),
            },
            py::Expr::FormattedValue(f) => {
                let mut items = vec![self.expr(*f.value)];
                if let Some(spec) = f.format_spec {
                    items.push(self.expr(*spec));
                }
                ExprKind::FString(items)
            }
            py::Expr::JoinedStr(j) => ExprKind::FString(
                j.values.into_iter().filter(|v| !v.is_constant_expr()).map(|v| self.expr(v)).collect(),
            ),
            py::Expr::Constant(c) => ExprKind::Constant(match c.value {
                py::Constant::None => Constant::None,
                py::Constant::Bool(b) => Constant::Bool(b),
                py::Constant::Str(_) => Constant::Str,
                py::Constant::Bytes(_) => Constant::Bytes,
                py::Constant::Int(_) => Constant::Int,
                py::Constant::Tuple(_) => Constant::Ellipsis,
                py::Constant::Float(_) => Constant::Float,
                py::Constant::Complex { .. } => Constant::Complex,
                py::Constant::Ellipsis => Constant::Ellipsis,
            }),
            py::Expr::Attribute(a) => ExprKind::Attribute { value: Box::new(self.expr(*a.value)), attr: a.attr.to_string() },
            py::Expr::Subscript(s) => ExprKind::Subscript {
                value: Box::new(self.expr(*s.value)),
                index: Box::new(self.expr(*s.slice)),
            },
            py::Expr::Starred(s) => ExprKind::Starred(Box::new(self.expr(*s.value))),
            py::Expr::Name(n) => ExprKind::Name(n.id.to_string()),
            py::Expr::Slice(s) => ExprKind::Slice(
                [s.lower, s.upper, s.step].into_iter().flatten().map(|b| self.expr(*b)).collect(),
            ),
        };
        let mut expr = Expr { kind, span };
        clamp_children(&mut expr);
        expr
    }
}

/// Some parser versions report f-string interior ranges relative to the
/// literal rather than the file. Pull such spans inside their parent so the
/// nesting invariant holds.
fn clamp_children(e: &mut Expr) {
    if !matches!(e.kind, ExprKind::FString(_)) {
        return;
    }
    let parent = e.span.clone();
    if let ExprKind::FString(items) = &mut e.kind {
        for item in items {
            reset_outside(item, &parent);
        }
    }
}

fn reset_outside(e: &mut Expr, parent: &SourceSpan) {
    if !parent.contains(&e.span) {
        e.span = parent.clone();
    }
    let span = e.span.clone();
    for_each_child_mut(e, &mut |c| reset_outside(c, &span));
}

fn for_each_child_mut(e: &mut Expr, f: &mut dyn FnMut(&mut Expr)) {
    match &mut e.kind {
        ExprKind::Name(_) | ExprKind::Constant(_) => {}
        ExprKind::Attribute { value, .. } => f(value),
        ExprKind::Subscript { value, index } => {
            f(value);
            f(index);
        }
        ExprKind::Call { func, args, keywords } => {
            f(func);
            args.iter_mut().for_each(&mut *f);
            keywords.iter_mut().for_each(|k| f(&mut k.value));
        }
        ExprKind::BinOp { left, right, .. } => {
            f(left);
            f(right);
        }
        ExprKind::UnaryOp { operand, .. } => f(operand),
        ExprKind::BoolOp { values, .. } => values.iter_mut().for_each(f),
        ExprKind::Compare { left, comparators, .. } => {
            f(left);
            comparators.iter_mut().for_each(f);
        }
        ExprKind::Lambda { params, body } => {
            params.iter_mut().filter_map(|p| p.default.as_mut()).for_each(&mut *f);
            f(body);
        }
        ExprKind::IfExp { test, body, orelse } => {
            f(test);
            f(body);
            f(orelse);
        }
        ExprKind::Collection { items, .. } | ExprKind::Slice(items) | ExprKind::FString(items) => {
            items.iter_mut().for_each(f)
        }
        ExprKind::Comprehension { elt, value, generators, .. } => {
            f(elt);
            if let Some(v) = value {
                f(v);
            }
            for g in generators {
                f(&mut g.target);
                f(&mut g.iter);
                g.ifs.iter_mut().for_each(&mut *f);
            }
        }
        ExprKind::Starred(x) | ExprKind::Await(x) => f(x),
        ExprKind::Yield(x) => {
            if let Some(x) = x {
                f(x)
            }
        }
        ExprKind::NamedExpr { target, value } => {
            f(target);
            f(value);
        }
    }
}
