//! AST to IR lowering.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::ast::*;
use super::ir::*;
use crate::span::{Position, SourceSpan};

/// Builtins that are modeled as returning their first argument.
pub const IDENTITY_BUILTINS: &[&str] = &[
    "repr",
    "len",
    "print",
    "isinstance",
    "Warning",
    "UserWarning",
    "FutureWarning",
    "DeprecationWarning",
    "PendingDeprecationWarning",
    "RuntimeWarning",
    "SyntaxWarning",
    "ImportWarning",
    "UnicodeWarning",
    "ResourceWarning",
];

/// Reflection builtins that lower to no-ops.
pub const UNSUPPORTED_BUILTINS: &[&str] = &["eval", "exec", "globals", "locals", "compile", "__import__"];

/// Lower a parsed module. `name` is the dotted module name other modules
/// use to import it.
pub fn lower(ast: Arc<Ast>, id: ModuleId, name: &str) -> IrModule {
    let globals = module_globals(&ast.body);
    let mut lw = Lowerer { module: id, ast: ast.clone(), procs: Vec::new(), sites: Vec::new(), globals };
    let script = lw.reserve();
    let scope = Scope {
        kind: ProcKind::Script,
        assigned: lw.globals.clone(),
        declared_global: BTreeSet::new(),
    };
    let mut b = FnBuilder::new(script, scope, "<module>".into(), "<module>".into(), ProcKind::Script, ast.span.clone());
    let mut stack = Vec::new();
    lw.stmts(&mut b, &mut stack, &ast.body);
    let proc = b.finish(None, MethodKind::Plain, Vec::new());
    lw.procs[0] = Some(proc);
    IrModule {
        id,
        name: name.to_string(),
        path: ast.path.clone(),
        ast: ast.clone(),
        procs: lw.procs.into_iter().map(|p| p.expect("every reserved procedure is lowered")).collect(),
        sites: lw.sites,
    }
}

#[derive(Debug, Clone)]
struct Scope {
    kind: ProcKind,
    assigned: BTreeSet<String>,
    declared_global: BTreeSet<String>,
}

/// Names bound at module level, including names declared `global` inside
/// functions.
fn module_globals(body: &[Stmt]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    bound_names(body, &mut out);
    fn declared(stmts: &[Stmt], out: &mut BTreeSet<String>) {
        for s in stmts {
            if let StmtKind::Global(names) = &s.kind {
                out.extend(names.iter().cloned());
            }
            for b in s.bodies() {
                declared(b, out);
            }
        }
    }
    declared(body, &mut out);
    out
}

fn target_names(e: &Expr, out: &mut BTreeSet<String>) {
    match &e.kind {
        ExprKind::Name(n) => {
            out.insert(n.clone());
        }
        ExprKind::Collection { items, .. } => items.iter().for_each(|i| target_names(i, out)),
        ExprKind::Starred(inner) => target_names(inner, out),
        _ => {}
    }
}

fn walrus_names(e: &Expr, out: &mut BTreeSet<String>) {
    if let ExprKind::NamedExpr { target, .. } = &e.kind {
        target_names(target, out);
    }
    if matches!(e.kind, ExprKind::Lambda { .. }) {
        return;
    }
    for c in e.children() {
        walrus_names(c, out);
    }
}

/// Names bound directly in a block, not descending into nested scopes.
fn bound_names(stmts: &[Stmt], out: &mut BTreeSet<String>) {
    for s in stmts {
        match &s.kind {
            StmtKind::FunctionDef(f) => {
                out.insert(f.name.clone());
            }
            StmtKind::ClassDef(c) => {
                out.insert(c.name.clone());
            }
            StmtKind::Assign { targets, .. } => targets.iter().for_each(|t| target_names(t, out)),
            StmtKind::AugAssign { target, .. } => target_names(target, out),
            StmtKind::For { target, .. } => target_names(target, out),
            StmtKind::With { items, .. } => {
                for i in items {
                    if let Some(t) = &i.target {
                        target_names(t, out);
                    }
                }
            }
            StmtKind::Import(aliases) => {
                for a in aliases {
                    let bound = a.asname.clone().unwrap_or_else(|| a.name.split('.').next().unwrap_or("").to_string());
                    out.insert(bound);
                }
            }
            StmtKind::ImportFrom { names, .. } => {
                for a in names {
                    if a.name != "*" {
                        out.insert(a.asname.clone().unwrap_or_else(|| a.name.clone()));
                    }
                }
            }
            StmtKind::Try { handlers, .. } => {
                for h in handlers {
                    if let Some(n) = &h.name {
                        out.insert(n.clone());
                    }
                }
            }
            StmtKind::Delete(targets) => targets.iter().for_each(|t| target_names(t, out)),
            _ => {}
        }
        if !matches!(s.kind, StmtKind::FunctionDef(_) | StmtKind::ClassDef(_)) {
            for e in s.exprs() {
                walrus_names(e, out);
            }
            for b in s.bodies() {
                bound_names(b, out);
            }
        }
    }
}

fn declarations(stmts: &[Stmt], globals: &mut BTreeSet<String>, nonlocals: &mut BTreeSet<String>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Global(n) => globals.extend(n.iter().cloned()),
            StmtKind::Nonlocal(n) => nonlocals.extend(n.iter().cloned()),
            StmtKind::FunctionDef(_) | StmtKind::ClassDef(_) => continue,
            _ => {}
        }
        for b in s.bodies() {
            declarations(b, globals, nonlocals);
        }
    }
}

fn function_scope(params: &[Param], body: &[Stmt], kind: ProcKind) -> Scope {
    let mut assigned: BTreeSet<String> = params.iter().map(|p| p.name.clone()).collect();
    bound_names(body, &mut assigned);
    let mut declared_global = BTreeSet::new();
    let mut declared_nonlocal = BTreeSet::new();
    declarations(body, &mut declared_global, &mut declared_nonlocal);
    for n in declared_global.iter().chain(declared_nonlocal.iter()) {
        assigned.remove(n);
    }
    Scope { kind, assigned, declared_global }
}

type Env = BTreeMap<String, Reg>;

struct LoopCtx {
    header: BlockId,
    /// (name, block, index) of header phis to patch.
    phis: Vec<(String, usize, usize)>,
    continues: Vec<Env>,
    breaks: Vec<Env>,
}

struct FnBuilder {
    id: ProcId,
    scope: Scope,
    name: String,
    qualified_name: String,
    kind: ProcKind,
    span: SourceSpan,
    blocks: Vec<Block>,
    cur: usize,
    env: Env,
    live: bool,
    next_reg: u32,
    next_instr: u32,
    loops: Vec<LoopCtx>,
}

impl FnBuilder {
    fn new(id: ProcId, scope: Scope, name: String, qualified_name: String, kind: ProcKind, span: SourceSpan) -> Self {
        FnBuilder {
            id,
            scope,
            name,
            qualified_name,
            kind,
            span,
            blocks: vec![Block { instrs: Vec::new(), term: Terminator::Exit }],
            cur: 0,
            env: Env::new(),
            live: true,
            next_reg: 0,
            next_instr: 0,
            loops: Vec::new(),
        }
    }

    fn reg(&mut self) -> Reg {
        let r = Reg(self.next_reg);
        self.next_reg += 1;
        r
    }

    fn emit(&mut self, kind: InstrKind, span: &SourceSpan) {
        let id = InstrId(self.next_instr);
        self.next_instr += 1;
        self.blocks[self.cur].instrs.push(Instr { id, kind, span: span.clone() });
    }

    fn new_block(&mut self) -> usize {
        self.blocks.push(Block { instrs: Vec::new(), term: Terminator::Exit });
        self.blocks.len() - 1
    }

    fn terminate(&mut self, term: Terminator) {
        self.blocks[self.cur].term = term;
    }

    fn jump_to(&mut self, target: usize) {
        self.terminate(Terminator::Jump(BlockId(target as u32)));
        self.cur = target;
    }

    /// Merge environments at the start of the current block.
    fn join(&mut self, envs: Vec<(Env, bool)>, span: &SourceSpan) {
        let live: Vec<Env> = envs.iter().filter(|(_, l)| *l).map(|(e, _)| e.clone()).collect();
        if live.is_empty() {
            self.env = envs.into_iter().next().map(|(e, _)| e).unwrap_or_default();
            self.live = false;
            return;
        }
        self.live = true;
        if live.len() == 1 {
            self.env = live.into_iter().next().unwrap();
            return;
        }
        let names: BTreeSet<&String> = live.iter().flat_map(|e| e.keys()).collect();
        let mut env = Env::new();
        for n in names {
            let mut sources: Vec<Reg> = Vec::new();
            for e in &live {
                if let Some(r) = e.get(n) {
                    if !sources.contains(r) {
                        sources.push(*r);
                    }
                }
            }
            if sources.len() == 1 {
                env.insert(n.clone(), sources[0]);
            } else {
                let r = self.reg();
                self.emit(InstrKind::Phi { result: r, sources }, span);
                env.insert(n.clone(), r);
            }
        }
        self.env = env;
    }

    fn finish(self, parent: Option<ProcId>, method_kind: MethodKind, params: Vec<IrParam>) -> IrProcedure {
        IrProcedure {
            id: self.id,
            name: self.name,
            qualified_name: self.qualified_name,
            kind: self.kind,
            method_kind,
            params,
            blocks: self.blocks,
            span: self.span,
            parent,
            num_regs: self.next_reg,
            num_instrs: self.next_instr,
        }
    }
}

struct Lowerer {
    module: ModuleId,
    ast: Arc<Ast>,
    procs: Vec<Option<IrProcedure>>,
    sites: Vec<SiteInfo>,
    globals: BTreeSet<String>,
}

/// Lexical information about the procedures enclosing the one being built.
struct Outer {
    scope: Scope,
}

impl Lowerer {
    fn reserve(&mut self) -> ProcId {
        self.procs.push(None);
        ProcId { module: self.module, index: self.procs.len() as u32 - 1 }
    }

    fn site(&mut self, kind: SiteKind, proc: ProcId, name: &str, span: &SourceSpan) -> SiteId {
        let id = SiteId { module: self.module, index: self.sites.len() as u32 };
        self.sites.push(SiteInfo { id, kind, proc, name: name.to_string(), span: span.clone() });
        id
    }

    fn text(&self, span: &SourceSpan) -> String {
        self.ast.text(span).to_string()
    }

    fn resolve(&self, b: &FnBuilder, outer: &[Outer], name: &str) -> VarRef {
        let s = &b.scope;
        match s.kind {
            ProcKind::Script => {
                return if self.globals.contains(name) {
                    VarRef::Global(name.into())
                } else {
                    VarRef::Unbound(name.into())
                }
            }
            ProcKind::ClassBody => {
                if s.assigned.contains(name) {
                    return VarRef::ClassAttr { class: b.id, name: name.into() };
                }
            }
            ProcKind::Function | ProcKind::Lambda => {
                if s.declared_global.contains(name) {
                    return VarRef::Global(name.into());
                }
                if s.assigned.contains(name) {
                    return VarRef::Local(name.into());
                }
            }
        }
        for (depth, o) in outer.iter().rev().enumerate() {
            match o.scope.kind {
                ProcKind::Script => break,
                ProcKind::ClassBody => continue,
                ProcKind::Function | ProcKind::Lambda => {
                    if o.scope.declared_global.contains(name) {
                        return VarRef::Global(name.into());
                    }
                    if o.scope.assigned.contains(name) {
                        return VarRef::Enclosing { depth: depth as u32 + 1, name: name.into() };
                    }
                }
            }
        }
        if self.globals.contains(name) {
            VarRef::Global(name.into())
        } else {
            VarRef::Unbound(name.into())
        }
    }

    // ---- statements ----

    fn stmts(&mut self, b: &mut FnBuilder, outer: &mut Vec<Outer>, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(b, outer, s);
        }
    }

    fn stmt(&mut self, b: &mut FnBuilder, outer: &mut Vec<Outer>, s: &Stmt) {
        let span = &s.span;
        match &s.kind {
            StmtKind::FunctionDef(f) => {
                let r = self.function(b, outer, &f.name, &f.params, FnBody::Stmts(&f.body), &f.decorators, span);
                self.store_name(b, outer, &f.name, r, span);
            }
            StmtKind::ClassDef(c) => {
                let r = self.class(b, outer, c, span);
                self.store_name(b, outer, &c.name, r, span);
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.expr(b, outer, e),
                    None => self.none(b, span),
                };
                b.emit(InstrKind::Return { value: v }, span);
                self.dead_end(b);
            }
            StmtKind::Assign { targets, value } => {
                if targets.len() == 1 {
                    if let Some(pairs) = pairwise(&targets[0], value) {
                        let regs: Vec<Reg> = pairs.iter().map(|(_, v)| self.expr(b, outer, v)).collect();
                        for ((t, _), r) in pairs.iter().zip(regs) {
                            self.assign(b, outer, t, r, span);
                        }
                        return;
                    }
                }
                let v = self.expr(b, outer, value);
                for t in targets {
                    self.assign(b, outer, t, v, span);
                }
            }
            StmtKind::AugAssign { target, op, value } => {
                let cur = match &target.kind {
                    ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. } => {
                        self.expr(b, outer, target)
                    }
                    _ => self.none(b, span),
                };
                let v = self.expr(b, outer, value);
                let r = b.reg();
                b.emit(InstrKind::BinOp { result: r, op: format!("{op}="), operands: vec![cur, v] }, span);
                self.assign(b, outer, target, r, span);
            }
            StmtKind::Import(aliases) => {
                for a in aliases {
                    let (dotted, bound) = match &a.asname {
                        Some(asname) => (a.name.clone(), asname.clone()),
                        None => {
                            let head = a.name.split('.').next().unwrap_or("").to_string();
                            (head.clone(), head)
                        }
                    };
                    let r = self.import(b, &dotted, span);
                    self.store_name(b, outer, &bound, r, span);
                }
            }
            StmtKind::ImportFrom { module, names, .. } => {
                for a in names {
                    if a.name == "*" {
                        b.emit(InstrKind::Unsupported { what: "import *".into(), result: None }, span);
                        continue;
                    }
                    let dotted = if module.is_empty() { a.name.clone() } else { format!("{module}.{}", a.name) };
                    let r = self.import(b, &dotted, span);
                    let bound = a.asname.clone().unwrap_or_else(|| a.name.clone());
                    self.store_name(b, outer, &bound, r, span);
                }
            }
            StmtKind::If { test, body, orelse } => {
                let c = self.expr(b, outer, test);
                let pre = b.env.clone();
                let pre_live = b.live;
                let then_b = b.new_block();
                let else_b = b.new_block();
                b.terminate(Terminator::Branch {
                    cond: c,
                    then_to: BlockId(then_b as u32),
                    else_to: BlockId(else_b as u32),
                });
                b.cur = then_b;
                self.stmts(b, outer, body);
                let then_env = (std::mem::take(&mut b.env), b.live);
                let then_end = b.cur;
                b.cur = else_b;
                b.env = pre;
                b.live = pre_live;
                self.stmts(b, outer, orelse);
                let else_env = (std::mem::take(&mut b.env), b.live);
                let join = b.new_block();
                b.terminate(Terminator::Jump(BlockId(join as u32)));
                b.blocks[then_end].term = Terminator::Jump(BlockId(join as u32));
                b.cur = join;
                b.join(vec![then_env, else_env], span);
            }
            StmtKind::While { test, body, orelse } => {
                let assigned = loop_assigned(body, None);
                let header = self.loop_header(b, &assigned, span);
                let c = self.expr(b, outer, test);
                let body_b = b.new_block();
                let exit_b = b.new_block();
                b.terminate(Terminator::Branch {
                    cond: c,
                    then_to: BlockId(body_b as u32),
                    else_to: BlockId(exit_b as u32),
                });
                let header_env = b.env.clone();
                b.cur = body_b;
                self.stmts(b, outer, body);
                self.loop_back(b, span);
                let ctx = b.loops.pop().expect("loop context");
                debug_assert_eq!(ctx.header.0 as usize, header);
                b.cur = exit_b;
                b.env = header_env;
                b.live = true;
                self.stmts(b, outer, orelse);
                let mut envs = vec![(std::mem::take(&mut b.env), b.live)];
                envs.extend(ctx.breaks.into_iter().map(|e| (e, true)));
                let join = b.new_block();
                b.jump_to(join);
                b.join(envs, span);
            }
            StmtKind::For { target, iter, body, orelse } => {
                let it = self.expr(b, outer, iter);
                let assigned = loop_assigned(body, Some(target));
                let header = self.loop_header(b, &assigned, span);
                let c = b.reg();
                b.emit(InstrKind::Unsupported { what: "loop condition".into(), result: Some(c) }, span);
                let body_b = b.new_block();
                let exit_b = b.new_block();
                b.terminate(Terminator::Branch {
                    cond: c,
                    then_to: BlockId(body_b as u32),
                    else_to: BlockId(exit_b as u32),
                });
                let header_env = b.env.clone();
                b.cur = body_b;
                self.assign(b, outer, target, it, &target.span);
                self.stmts(b, outer, body);
                self.loop_back(b, span);
                let ctx = b.loops.pop().expect("loop context");
                debug_assert_eq!(ctx.header.0 as usize, header);
                b.cur = exit_b;
                b.env = header_env;
                b.live = true;
                self.stmts(b, outer, orelse);
                let mut envs = vec![(std::mem::take(&mut b.env), b.live)];
                envs.extend(ctx.breaks.into_iter().map(|e| (e, true)));
                let join = b.new_block();
                b.jump_to(join);
                b.join(envs, span);
            }
            StmtKind::With { items, body } => {
                for item in items {
                    let v = self.expr(b, outer, &item.context);
                    if let Some(t) = &item.target {
                        self.assign(b, outer, t, v, span);
                    }
                }
                self.stmts(b, outer, body);
            }
            StmtKind::Try { body, handlers, orelse, finalbody } => {
                let pre = (b.env.clone(), b.live);
                self.stmts(b, outer, body);
                let body_env = (b.env.clone(), b.live);
                let handler_start = b.new_block();
                b.jump_to(handler_start);
                b.join(vec![pre, body_env.clone()], span);
                let start_env = (b.env.clone(), b.live);
                let mut ends = Vec::new();
                for h in handlers {
                    let hb = b.new_block();
                    b.jump_to(hb);
                    b.env = start_env.0.clone();
                    b.live = start_env.1;
                    if let Some(k) = &h.kind {
                        let v = self.expr(b, outer, k);
                        if let Some(n) = &h.name {
                            self.store_name(b, outer, n, v, &h.span);
                        }
                    }
                    self.stmts(b, outer, &h.body);
                    ends.push((b.env.clone(), b.live));
                }
                let ob = b.new_block();
                b.jump_to(ob);
                b.env = body_env.0;
                b.live = body_env.1;
                self.stmts(b, outer, orelse);
                ends.insert(0, (b.env.clone(), b.live));
                let join = b.new_block();
                b.jump_to(join);
                b.join(ends, span);
                self.stmts(b, outer, finalbody);
            }
            StmtKind::Assert { test, msg } => {
                self.expr(b, outer, test);
                if let Some(m) = msg {
                    self.expr(b, outer, m);
                }
            }
            StmtKind::Raise { exc, cause } => {
                for e in exc.iter().chain(cause.iter()) {
                    self.expr(b, outer, e);
                }
                self.dead_end(b);
            }
            StmtKind::Delete(targets) => {
                for t in targets {
                    match &t.kind {
                        ExprKind::Attribute { value, .. } => {
                            self.expr(b, outer, value);
                        }
                        ExprKind::Subscript { value, index } => {
                            self.expr(b, outer, value);
                            self.expr(b, outer, index);
                        }
                        _ => {}
                    }
                }
            }
            StmtKind::Global(_) | StmtKind::Nonlocal(_) | StmtKind::Pass => {}
            StmtKind::Break => {
                if let Some(l) = b.loops.last_mut() {
                    l.breaks.push(b.env.clone());
                }
                self.dead_end(b);
            }
            StmtKind::Continue => {
                if let Some(l) = b.loops.last_mut() {
                    l.continues.push(b.env.clone());
                }
                self.dead_end(b);
            }
            StmtKind::Expr(e) => {
                self.expr(b, outer, e);
            }
            StmtKind::Unsupported { what, exprs, bodies } => {
                b.emit(InstrKind::Unsupported { what: what.clone(), result: None }, span);
                for e in exprs {
                    self.expr(b, outer, e);
                }
                let pre = (b.env.clone(), b.live);
                let mut ends = vec![pre.clone()];
                for body in bodies {
                    let bb = b.new_block();
                    b.jump_to(bb);
                    b.env = pre.0.clone();
                    b.live = pre.1;
                    self.stmts(b, outer, body);
                    ends.push((b.env.clone(), b.live));
                }
                let join = b.new_block();
                b.jump_to(join);
                b.join(ends, span);
            }
        }
    }

    /// Code after return/raise/break/continue lands in a fresh block that
    /// is not joined into live paths.
    fn dead_end(&mut self, b: &mut FnBuilder) {
        let next = b.new_block();
        b.terminate(Terminator::Exit);
        b.cur = next;
        b.live = false;
    }

    fn loop_header(&mut self, b: &mut FnBuilder, assigned: &BTreeSet<String>, span: &SourceSpan) -> usize {
        let header = b.new_block();
        b.jump_to(header);
        let mut phis = Vec::new();
        // Names without a definition before the loop fall back to the
        // variable's store set when read.
        for name in assigned {
            let Some(pre) = b.env.get(name).copied() else { continue };
            let r = b.reg();
            let sources = vec![pre];
            b.emit(InstrKind::Phi { result: r, sources }, span);
            phis.push((name.clone(), header, b.blocks[header].instrs.len() - 1));
            b.env.insert(name.clone(), r);
        }
        b.loops.push(LoopCtx { header: BlockId(header as u32), phis, continues: Vec::new(), breaks: Vec::new() });
        header
    }

    fn loop_back(&mut self, b: &mut FnBuilder, _span: &SourceSpan) {
        let header = b.loops.last().expect("loop context").header;
        b.terminate(Terminator::Jump(header));
        let mut ends: Vec<Env> = Vec::new();
        if b.live {
            ends.push(b.env.clone());
        }
        let ctx = b.loops.last_mut().expect("loop context");
        ends.append(&mut ctx.continues);
        let phis = ctx.phis.clone();
        for (name, block, idx) in phis {
            for env in &ends {
                if let Some(r) = env.get(&name) {
                    if let InstrKind::Phi { result, sources } = &mut b.blocks[block].instrs[idx].kind {
                        if r != result && !sources.contains(r) {
                            sources.push(*r);
                        }
                    }
                }
            }
        }
    }

    fn none(&mut self, b: &mut FnBuilder, span: &SourceSpan) -> Reg {
        let r = b.reg();
        b.emit(InstrKind::Const { result: r, value: Constant::None, as_receiver: false }, span);
        r
    }

    fn import(&mut self, b: &mut FnBuilder, dotted: &str, span: &SourceSpan) -> Reg {
        let site = self.site(SiteKind::Import, b.id, dotted, span);
        let r = b.reg();
        b.emit(InstrKind::Import { result: r, dotted: dotted.into(), site }, span);
        r
    }

    fn store_name(&mut self, b: &mut FnBuilder, outer: &[Outer], name: &str, value: Reg, span: &SourceSpan) {
        let var = match self.resolve(b, outer, name) {
            // Stores never resolve to an unbound library name; bind locally.
            VarRef::Unbound(n) => VarRef::Local(n),
            v => v,
        };
        if !matches!(var, VarRef::Enclosing { .. }) {
            b.env.insert(name.to_string(), value);
        }
        b.emit(InstrKind::StoreVar { var, value }, span);
    }

    fn assign(&mut self, b: &mut FnBuilder, outer: &mut Vec<Outer>, target: &Expr, value: Reg, span: &SourceSpan) {
        match &target.kind {
            ExprKind::Name(n) => self.store_name(b, outer, n, value, span),
            ExprKind::Collection { items, .. } => {
                for t in items {
                    self.assign(b, outer, t, value, span);
                }
            }
            ExprKind::Starred(inner) => self.assign(b, outer, inner, value, span),
            ExprKind::Attribute { value: obj, attr } => {
                let o = self.expr(b, outer, obj);
                b.emit(InstrKind::FieldWrite { object: o, field: attr.clone(), value }, span);
            }
            ExprKind::Subscript { value: obj, index } => {
                let o = self.expr(b, outer, obj);
                self.expr(b, outer, index);
                b.emit(InstrKind::FieldWrite { object: o, field: "__getitem__".into(), value }, span);
            }
            _ => {
                b.emit(InstrKind::Unsupported { what: "assignment target".into(), result: None }, span);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn function(
        &mut self,
        b: &mut FnBuilder,
        outer: &mut Vec<Outer>,
        name: &str,
        params: &[Param],
        body: FnBody<'_>,
        decorators: &[Expr],
        span: &SourceSpan,
    ) -> Reg {
        // Decorator expressions are evaluated before the definition.
        let mut method_kind = MethodKind::Plain;
        let mut decorator_regs = Vec::new();
        for d in decorators {
            if let ExprKind::Name(n) = &d.kind {
                if matches!(self.resolve(b, outer, n), VarRef::Unbound(_)) {
                    match n.as_str() {
                        "staticmethod" => {
                            method_kind = MethodKind::Static;
                            continue;
                        }
                        "classmethod" => {
                            method_kind = MethodKind::Class;
                            continue;
                        }
                        _ => {}
                    }
                }
            }
            let r = self.expr(b, outer, d);
            decorator_regs.push((r, d));
        }
        let mut defaults = Vec::new();
        for (i, p) in params.iter().enumerate() {
            if let Some(d) = &p.default {
                let r = self.expr(b, outer, d);
                defaults.push((i as u32, r));
            }
        }
        let id = self.reserve();
        let kind = if matches!(body, FnBody::Expr(_)) { ProcKind::Lambda } else { ProcKind::Function };
        let scope = match body {
            FnBody::Stmts(s) => function_scope(params, s, kind),
            FnBody::Expr(e) => {
                let mut assigned: BTreeSet<String> = params.iter().map(|p| p.name.clone()).collect();
                walrus_names(e, &mut assigned);
                Scope {
                    kind,
                    assigned,
                    declared_global: BTreeSet::new(),
                }
            }
        };
        let qualified = if b.kind == ProcKind::Script { name.to_string() } else { format!("{}.{name}", b.qualified_name) };
        let mut fb = FnBuilder::new(id, scope, name.to_string(), qualified, kind, span.clone());
        let mut ir_params = Vec::new();
        for (i, p) in params.iter().enumerate() {
            let r = fb.reg();
            fb.emit(InstrKind::Param { result: r, index: i as u32 }, &p.span);
            fb.env.insert(p.name.clone(), r);
            fb.emit(InstrKind::StoreVar { var: VarRef::Local(p.name.clone()), value: r }, &p.span);
            ir_params.push(IrParam { name: p.name.clone(), kind: p.kind, has_default: p.default.is_some(), span: p.span.clone() });
        }
        outer.push(Outer { scope: b.scope.clone() });
        match body {
            FnBody::Stmts(s) => self.stmts(&mut fb, outer, s),
            FnBody::Expr(e) => {
                let v = self.expr(&mut fb, outer, e);
                fb.emit(InstrKind::Return { value: v }, &e.span);
            }
        }
        outer.pop();
        let proc = fb.finish(Some(b.id), method_kind, ir_params);
        self.procs[id.index as usize] = Some(proc);

        let mut r = b.reg();
        b.emit(InstrKind::MakeFunction { result: r, proc: id, defaults }, span);
        for (d, dexpr) in decorator_regs.into_iter().rev() {
            r = self.synthetic_call(b, d, r, dexpr, span);
        }
        r
    }

    fn synthetic_call(&mut self, b: &mut FnBuilder, callee: Reg, arg: Reg, dexpr: &Expr, span: &SourceSpan) -> Reg {
        let (site_name, attr_call) = match &dexpr.kind {
            ExprKind::Name(n) => (n.clone(), false),
            ExprKind::Attribute { attr, .. } => (attr.clone(), true),
            ExprKind::Call { func, .. } => (self.text(&func.span), false),
            _ => (self.text(&dexpr.span), false),
        };
        let site = self.site(SiteKind::Decorator, b.id, &site_name, &dexpr.span);
        let result = b.reg();
        b.emit(
            InstrKind::Call(Box::new(CallOrNew {
                result,
                callee,
                receiver: None,
                site,
                site_name,
                attr_call,
                args: vec![arg],
                star_args: vec![],
                keywords: vec![],
                kind: CallKind::Normal,
                explicit: false,
                name_pos: dexpr.span.start(),
            })),
            span,
        );
        result
    }

    fn class(&mut self, b: &mut FnBuilder, outer: &mut Vec<Outer>, c: &ClassDef, span: &SourceSpan) -> Reg {
        let mut decorator_regs = Vec::new();
        for d in &c.decorators {
            let r = self.expr(b, outer, d);
            decorator_regs.push((r, d));
        }
        let bases: Vec<Reg> = c.bases.iter().map(|e| self.expr(b, outer, e)).collect();
        for k in &c.keywords {
            self.expr(b, outer, &k.value);
            if k.name.as_deref() == Some("metaclass") {
                b.emit(InstrKind::Unsupported { what: "metaclass".into(), result: None }, span);
            }
        }
        let id = self.reserve();
        let mut assigned = BTreeSet::new();
        bound_names(&c.body, &mut assigned);
        let scope = Scope {
            kind: ProcKind::ClassBody,
            assigned,
            declared_global: BTreeSet::new(),
        };
        let qualified = if b.kind == ProcKind::Script { c.name.clone() } else { format!("{}.{}", b.qualified_name, c.name) };
        let mut cb = FnBuilder::new(id, scope, c.name.clone(), qualified, ProcKind::ClassBody, span.clone());
        outer.push(Outer { scope: b.scope.clone() });
        self.stmts(&mut cb, outer, &c.body);
        outer.pop();
        let proc = cb.finish(Some(b.id), MethodKind::Plain, Vec::new());
        self.procs[id.index as usize] = Some(proc);

        let site = self.site(SiteKind::Class, b.id, &c.name, span);
        let mut r = b.reg();
        b.emit(InstrKind::MakeClass { result: r, class: id, bases, site }, span);
        for (d, dexpr) in decorator_regs.into_iter().rev() {
            r = self.synthetic_call(b, d, r, dexpr, span);
        }
        r
    }

    // ---- expressions ----

    fn expr(&mut self, b: &mut FnBuilder, outer: &mut Vec<Outer>, e: &Expr) -> Reg {
        let span = &e.span;
        match &e.kind {
            ExprKind::Name(n) => self.load_name(b, outer, n, span),
            ExprKind::Constant(c) => {
                let r = b.reg();
                b.emit(InstrKind::Const { result: r, value: c.clone(), as_receiver: false }, span);
                r
            }
            ExprKind::Attribute { value, attr } => {
                let o = self.object(b, outer, value);
                let r = b.reg();
                b.emit(
                    InstrKind::FieldRead {
                        result: r,
                        object: o,
                        field: attr.clone(),
                        method_callee: false,
                        name_pos: attr_pos(span, attr),
                    },
                    span,
                );
                r
            }
            ExprKind::Subscript { value, index } => {
                let o = self.object(b, outer, value);
                self.expr(b, outer, index);
                let r = b.reg();
                b.emit(
                    InstrKind::FieldRead {
                        result: r,
                        object: o,
                        field: "__getitem__".into(),
                        method_callee: false,
                        name_pos: value.span.end(),
                    },
                    span,
                );
                r
            }
            ExprKind::Call { func, args, keywords } => self.call(b, outer, e, func, args, keywords),
            ExprKind::BinOp { left, op, right } => {
                let l = self.expr(b, outer, left);
                let r2 = self.expr(b, outer, right);
                self.binop(b, op, vec![l, r2], span)
            }
            ExprKind::UnaryOp { op, operand } => {
                let o = self.expr(b, outer, operand);
                self.binop(b, op, vec![o], span)
            }
            ExprKind::BoolOp { op, values } => {
                let vs: Vec<Reg> = values.iter().map(|v| self.expr(b, outer, v)).collect();
                self.binop(b, op, vs, span)
            }
            ExprKind::Compare { left, ops, comparators } => {
                let mut vs = vec![self.expr(b, outer, left)];
                vs.extend(comparators.iter().map(|c| self.expr(b, outer, c)));
                self.binop(b, &ops.join(" "), vs, span)
            }
            ExprKind::Lambda { params, body } => {
                let name = format!("<lambda:{}>", span.start_line);
                self.function(b, outer, &name, params, FnBody::Expr(body), &[], span)
            }
            ExprKind::IfExp { test, body, orelse } => {
                self.expr(b, outer, test);
                let t = self.expr(b, outer, body);
                let f = self.expr(b, outer, orelse);
                let r = b.reg();
                b.emit(InstrKind::Phi { result: r, sources: vec![t, f] }, span);
                r
            }
            ExprKind::Collection { items, .. } => {
                let regs: Vec<Reg> = items.iter().map(|i| self.expr(b, outer, i)).collect();
                let r = b.reg();
                b.emit(InstrKind::Build { result: r, items: regs }, span);
                r
            }
            ExprKind::Comprehension { elt, value, generators, .. } => {
                // Straight-line desugaring; loop variables are scoped to the
                // comprehension through the environment only.
                let saved = b.env.clone();
                for g in generators {
                    let it = self.expr(b, outer, &g.iter);
                    self.bind_comprehension_target(b, outer, &g.target, it);
                    for cond in &g.ifs {
                        self.expr(b, outer, cond);
                    }
                }
                let mut items = vec![self.expr(b, outer, elt)];
                if let Some(v) = value {
                    items.push(self.expr(b, outer, v));
                }
                let mut names = BTreeSet::new();
                for g in generators {
                    target_names(&g.target, &mut names);
                }
                for n in names {
                    match saved.get(&n) {
                        Some(r) => b.env.insert(n, *r),
                        None => b.env.remove(&n),
                    };
                }
                let r = b.reg();
                b.emit(InstrKind::Build { result: r, items }, span);
                r
            }
            ExprKind::Starred(inner) | ExprKind::Await(inner) => self.expr(b, outer, inner),
            ExprKind::Slice(parts) | ExprKind::FString(parts) => {
                let regs: Vec<Reg> = parts.iter().map(|p| self.expr(b, outer, p)).collect();
                if matches!(e.kind, ExprKind::FString(_)) {
                    self.binop(b, "format", regs, span)
                } else {
                    let r = b.reg();
                    b.emit(InstrKind::Build { result: r, items: regs }, span);
                    r
                }
            }
            ExprKind::Yield(v) => {
                let val = match v {
                    Some(v) => self.expr(b, outer, v),
                    None => self.none(b, span),
                };
                b.emit(InstrKind::Return { value: val }, span);
                self.none(b, span)
            }
            ExprKind::NamedExpr { target, value } => {
                let v = self.expr(b, outer, value);
                self.assign(b, outer, target, v, span);
                v
            }
        }
    }

    /// Like `expr`, but marks literal receivers so method calls on them
    /// (`", ".join(x)`) have an object to dispatch on.
    fn object(&mut self, b: &mut FnBuilder, outer: &mut Vec<Outer>, e: &Expr) -> Reg {
        if let ExprKind::Constant(c) = &e.kind {
            let r = b.reg();
            b.emit(InstrKind::Const { result: r, value: c.clone(), as_receiver: true }, &e.span);
            return r;
        }
        self.expr(b, outer, e)
    }

    fn bind_comprehension_target(&mut self, b: &mut FnBuilder, outer: &mut Vec<Outer>, t: &Expr, value: Reg) {
        match &t.kind {
            ExprKind::Name(n) => {
                b.env.insert(n.clone(), value);
            }
            ExprKind::Collection { items, .. } => {
                for i in items {
                    self.bind_comprehension_target(b, outer, i, value);
                }
            }
            ExprKind::Starred(inner) => self.bind_comprehension_target(b, outer, inner, value),
            _ => {
                let span = t.span.clone();
                self.assign(b, outer, t, value, &span);
            }
        }
    }

    fn binop(&mut self, b: &mut FnBuilder, op: &str, operands: Vec<Reg>, span: &SourceSpan) -> Reg {
        let r = b.reg();
        b.emit(InstrKind::BinOp { result: r, op: op.to_string(), operands }, span);
        r
    }

    fn load_name(&mut self, b: &mut FnBuilder, outer: &[Outer], name: &str, span: &SourceSpan) -> Reg {
        if let Some(r) = b.env.get(name) {
            return *r;
        }
        let var = self.resolve(b, outer, name);
        let r = b.reg();
        b.emit(InstrKind::LoadVar { result: r, var }, span);
        r
    }

    fn call(
        &mut self,
        b: &mut FnBuilder,
        outer: &mut Vec<Outer>,
        e: &Expr,
        func: &Expr,
        args: &[Expr],
        keywords: &[Keyword],
    ) -> Reg {
        let span = &e.span;
        let mut kind = CallKind::Normal;
        let (callee, receiver, site_name, attr_call, name_pos) = match &func.kind {
            ExprKind::Attribute { value, attr } => {
                let o = self.object(b, outer, value);
                let t = b.reg();
                let pos = attr_pos(&func.span, attr);
                b.emit(
                    InstrKind::FieldRead { result: t, object: o, field: attr.clone(), method_callee: true, name_pos: pos },
                    &func.span,
                );
                (t, Some(o), attr.clone(), true, pos)
            }
            ExprKind::Name(n) => {
                let unbound = !b.env.contains_key(n) && matches!(self.resolve(b, outer, n), VarRef::Unbound(_));
                if unbound && IDENTITY_BUILTINS.contains(&n.as_str()) {
                    kind = CallKind::Identity;
                } else if unbound && UNSUPPORTED_BUILTINS.contains(&n.as_str()) {
                    kind = CallKind::NoOp;
                    b.emit(InstrKind::Unsupported { what: n.clone(), result: None }, span);
                }
                let c = self.load_name(b, outer, n, &func.span);
                (c, None, n.clone(), false, func.span.start())
            }
            _ => {
                let c = self.expr(b, outer, func);
                (c, None, self.text(&func.span), false, func.span.start())
            }
        };
        let mut arg_regs = Vec::new();
        let mut star_args = Vec::new();
        for a in args {
            if let ExprKind::Starred(inner) = &a.kind {
                star_args.push(self.expr(b, outer, inner));
            } else {
                arg_regs.push(self.expr(b, outer, a));
            }
        }
        let kw: Vec<(Option<String>, Reg)> =
            keywords.iter().map(|k| (k.name.clone(), self.expr(b, outer, &k.value))).collect();
        let site = self.site(SiteKind::Call, b.id, &site_name, span);
        let result = b.reg();
        b.emit(
            InstrKind::Call(Box::new(CallOrNew {
                result,
                callee,
                receiver,
                site,
                site_name,
                attr_call,
                args: arg_regs,
                star_args,
                keywords: kw,
                kind,
                explicit: true,
                name_pos,
            })),
            span,
        );
        result
    }
}

enum FnBody<'a> {
    Stmts(&'a [Stmt]),
    Expr(&'a Expr),
}

/// Position of the attribute name in `value.attr`.
pub fn attr_pos(span: &SourceSpan, attr: &str) -> Position {
    Position::new(span.end_line, span.end_col.saturating_sub(attr.len() as u32).max(1))
}

/// `a, b = x, y` with matching arity assigns element-wise.
fn pairwise<'e>(target: &'e Expr, value: &'e Expr) -> Option<Vec<(&'e Expr, &'e Expr)>> {
    match (&target.kind, &value.kind) {
        (
            ExprKind::Collection { kind: CollectionKind::Tuple | CollectionKind::List, items: ts },
            ExprKind::Collection { kind: CollectionKind::Tuple | CollectionKind::List, items: vs },
        ) if ts.len() == vs.len()
            && !ts.iter().chain(vs.iter()).any(|e| matches!(e.kind, ExprKind::Starred(_))) =>
        {
            Some(ts.iter().zip(vs.iter()).collect())
        }
        _ => None,
    }
}

/// Names assigned anywhere in a loop body (plus the loop target).
fn loop_assigned(body: &[Stmt], target: Option<&Expr>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    bound_names(body, &mut out);
    if let Some(t) = target {
        target_names(t, &mut out);
    }
    out
}
