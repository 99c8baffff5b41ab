//! Register-based intermediate representation.
//!
//! Each procedure is a control-flow graph of basic blocks. Local variables
//! are resolved to registers during lowering; merges use `Phi`. Every call
//! expression, decorator application and class creation becomes a
//! `CallOrNew`-style site with its own [`SiteId`].

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ast::{Ast, Constant, ParamKind};
use crate::span::{Position, SourceSpan};

pub type ModuleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcId {
    pub module: ModuleId,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteId {
    pub module: ModuleId,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reg(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub u32);

/// Procedure-local instruction identifier, unique across all blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstrId(pub u32);

impl fmt::Display for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}.{}", self.module, self.index)
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}.{}", self.module, self.index)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IrProgram {
    pub modules: Vec<IrModule>,
}

impl IrProgram {
    pub fn module(&self, id: ModuleId) -> &IrModule {
        &self.modules[id as usize]
    }

    pub fn proc(&self, id: ProcId) -> &IrProcedure {
        &self.modules[id.module as usize].procs[id.index as usize]
    }

    pub fn site(&self, id: SiteId) -> &SiteInfo {
        &self.modules[id.module as usize].sites[id.index as usize]
    }

    pub fn module_by_name(&self, name: &str) -> Option<ModuleId> {
        self.modules.iter().find(|m| m.name == name).map(|m| m.id)
    }

    pub fn procs(&self) -> impl Iterator<Item = &IrProcedure> {
        self.modules.iter().flat_map(|m| m.procs.iter())
    }

    /// Stable textual form, used by `--dump-ir`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for m in &self.modules {
            m.dump_into(&mut out);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct IrModule {
    pub id: ModuleId,
    /// Dotted module name used to resolve imports.
    pub name: String,
    pub path: PathBuf,
    pub ast: Arc<Ast>,
    pub procs: Vec<IrProcedure>,
    pub sites: Vec<SiteInfo>,
}

impl IrModule {
    pub fn script(&self) -> ProcId {
        ProcId { module: self.id, index: 0 }
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_into(&mut out);
        out
    }

    fn dump_into(&self, out: &mut String) {
        let _ = writeln!(out, "module {} {:?} ({})", self.id, self.name, self.path.display());
        for p in &self.procs {
            p.dump_into(out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteKind {
    Call,
    Decorator,
    Class,
    Import,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteInfo {
    pub id: SiteId,
    pub kind: SiteKind,
    pub proc: ProcId,
    pub name: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcKind {
    Script,
    Function,
    Lambda,
    ClassBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    Plain,
    Static,
    Class,
}

#[derive(Debug, Clone)]
pub struct IrParam {
    pub name: String,
    pub kind: ParamKind,
    pub has_default: bool,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct IrProcedure {
    pub id: ProcId,
    pub name: String,
    /// Dotted path through enclosing definitions, e.g. `Model.fit` or
    /// `outer.<lambda:12>`; the script body is `<module>`.
    pub qualified_name: String,
    pub kind: ProcKind,
    pub method_kind: MethodKind,
    pub params: Vec<IrParam>,
    pub blocks: Vec<Block>,
    pub span: SourceSpan,
    pub parent: Option<ProcId>,
    pub num_regs: u32,
    pub num_instrs: u32,
}

impl IrProcedure {
    pub fn instrs(&self) -> impl Iterator<Item = &Instr> {
        self.blocks.iter().flat_map(|b| b.instrs.iter())
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_into(&mut out);
        out
    }

    fn dump_into(&self, out: &mut String) {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| {
                let prefix = match p.kind {
                    ParamKind::VarArgs => "*",
                    ParamKind::VarKeywords => "**",
                    _ => "",
                };
                format!("{prefix}{}{}", p.name, if p.has_default { "=?" } else { "" })
            })
            .collect();
        let _ = writeln!(
            out,
            "  proc {} {} {:?} {:?}({}) @{}",
            self.id,
            self.qualified_name,
            self.kind,
            self.method_kind,
            params.join(", "),
            self.span.start()
        );
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "    b{i}:");
            for ins in &b.instrs {
                let _ = writeln!(out, "      {:>3}: {}", ins.id.0, ins.kind);
            }
            let _ = writeln!(out, "      {}", b.term);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub instrs: Vec<Instr>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Jump(BlockId),
    Branch { cond: Reg, then_to: BlockId, else_to: BlockId },
    Exit,
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Jump(b) => write!(f, "jump b{}", b.0),
            Terminator::Branch { cond, then_to, else_to } => write!(f, "branch {cond} b{} b{}", then_to.0, else_to.0),
            Terminator::Exit => write!(f, "exit"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instr {
    pub id: InstrId,
    pub kind: InstrKind,
    pub span: SourceSpan,
}

/// How a name is resolved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VarRef {
    /// Local of the current procedure.
    Local(String),
    /// Local of the procedure `depth` lexical levels out (1 = parent).
    Enclosing { depth: u32, name: String },
    /// Module-level variable of the current module.
    Global(String),
    /// Attribute of the class whose body is being executed.
    ClassAttr { class: ProcId, name: String },
    /// Not bound anywhere in the module; treated as a library name.
    Unbound(String),
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRef::Local(n) => write!(f, "local {n}"),
            VarRef::Enclosing { depth, name } => write!(f, "outer{depth} {name}"),
            VarRef::Global(n) => write!(f, "global {n}"),
            VarRef::ClassAttr { class, name } => write!(f, "class {class} {name}"),
            VarRef::Unbound(n) => write!(f, "unbound {n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallKind {
    Normal,
    /// Builtins modeled as passing their first argument through.
    Identity,
    /// Reflection builtins that are not modeled.
    NoOp,
}

#[derive(Debug, Clone)]
pub struct CallOrNew {
    pub result: Reg,
    pub callee: Reg,
    /// Object the callee was read from, for `a.f(...)`.
    pub receiver: Option<Reg>,
    pub site: SiteId,
    /// Attribute name for `a.f(...)`, variable name for `f(...)`.
    pub site_name: String,
    pub attr_call: bool,
    pub args: Vec<Reg>,
    /// Positional arguments written with `*`; these may fill any parameter.
    pub star_args: Vec<Reg>,
    /// Keyword arguments; `None` names a `**mapping`.
    pub keywords: Vec<(Option<String>, Reg)>,
    pub kind: CallKind,
    /// False for calls synthesized by lowering (decorators).
    pub explicit: bool,
    /// Start of the callee name at the call site.
    pub name_pos: Position,
}

#[derive(Debug, Clone)]
pub enum InstrKind {
    Const { result: Reg, value: Constant, as_receiver: bool },
    Param { result: Reg, index: u32 },
    LoadVar { result: Reg, var: VarRef },
    StoreVar { var: VarRef, value: Reg },
    Phi { result: Reg, sources: Vec<Reg> },
    Call(Box<CallOrNew>),
    FieldRead { result: Reg, object: Reg, field: String, method_callee: bool, name_pos: Position },
    FieldWrite { object: Reg, field: String, value: Reg },
    BinOp { result: Reg, op: String, operands: Vec<Reg> },
    /// Tuple/list/set/dict displays and other value-preserving
    /// aggregations; the result holds whatever the items hold.
    Build { result: Reg, items: Vec<Reg> },
    MakeFunction { result: Reg, proc: ProcId, defaults: Vec<(u32, Reg)> },
    MakeClass { result: Reg, class: ProcId, bases: Vec<Reg>, site: SiteId },
    Import { result: Reg, dotted: String, site: SiteId },
    Return { value: Reg },
    Unsupported { what: String, result: Option<Reg> },
}

impl InstrKind {
    pub fn result(&self) -> Option<Reg> {
        match self {
            InstrKind::Const { result, .. }
            | InstrKind::Param { result, .. }
            | InstrKind::LoadVar { result, .. }
            | InstrKind::Phi { result, .. }
            | InstrKind::FieldRead { result, .. }
            | InstrKind::BinOp { result, .. }
            | InstrKind::Build { result, .. }
            | InstrKind::MakeFunction { result, .. }
            | InstrKind::MakeClass { result, .. }
            | InstrKind::Import { result, .. } => Some(*result),
            InstrKind::Call(c) => Some(c.result),
            InstrKind::Unsupported { result, .. } => *result,
            InstrKind::StoreVar { .. } | InstrKind::FieldWrite { .. } | InstrKind::Return { .. } => None,
        }
    }

    /// Registers read by the instruction.
    pub fn uses(&self) -> Vec<Reg> {
        match self {
            InstrKind::Const { .. }
            | InstrKind::Param { .. }
            | InstrKind::LoadVar { .. }
            | InstrKind::Import { .. }
            | InstrKind::Unsupported { .. } => vec![],
            InstrKind::StoreVar { value, .. } => vec![*value],
            InstrKind::Phi { sources, .. } => sources.clone(),
            InstrKind::Call(c) => {
                let mut v = vec![c.callee];
                v.extend(c.receiver);
                v.extend(c.args.iter().copied());
                v.extend(c.star_args.iter().copied());
                v.extend(c.keywords.iter().map(|(_, r)| *r));
                v
            }
            InstrKind::FieldRead { object, .. } => vec![*object],
            InstrKind::FieldWrite { object, value, .. } => vec![*object, *value],
            InstrKind::BinOp { operands, .. } => operands.clone(),
            InstrKind::Build { items, .. } => items.clone(),
            InstrKind::MakeFunction { defaults, .. } => defaults.iter().map(|(_, r)| *r).collect(),
            InstrKind::MakeClass { bases, .. } => bases.clone(),
            InstrKind::Return { value } => vec![*value],
        }
    }
}

fn regs(rs: &[Reg]) -> String {
    rs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for InstrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstrKind::Const { result, value, as_receiver } => {
                write!(f, "{result} = const {}{}", value.type_name(), if *as_receiver { " recv" } else { "" })
            }
            InstrKind::Param { result, index } => write!(f, "{result} = param {index}"),
            InstrKind::LoadVar { result, var } => write!(f, "{result} = load {var}"),
            InstrKind::StoreVar { var, value } => write!(f, "store {var} <- {value}"),
            InstrKind::Phi { result, sources } => write!(f, "{result} = phi({})", regs(sources)),
            InstrKind::Call(c) => {
                let kw: Vec<String> = c
                    .keywords
                    .iter()
                    .map(|(n, r)| format!("{}={r}", n.as_deref().unwrap_or("**")))
                    .collect();
                let star: Vec<String> = c.star_args.iter().map(|r| format!("*{r}")).collect();
                let mut all = vec![regs(&c.args)];
                all.extend(star);
                all.extend(kw);
                all.retain(|s| !s.is_empty());
                write!(
                    f,
                    "{} = call{} {} {}{} {:?}({})",
                    c.result,
                    match c.kind {
                        CallKind::Normal => "",
                        CallKind::Identity => ".identity",
                        CallKind::NoOp => ".noop",
                    },
                    c.site,
                    c.callee,
                    c.receiver.map(|r| format!(" recv {r}")).unwrap_or_default(),
                    c.site_name,
                    all.join(", ")
                )?;
                if !c.explicit {
                    write!(f, " synthetic")?;
                }
                Ok(())
            }
            InstrKind::FieldRead { result, object, field, method_callee, .. } => {
                write!(f, "{result} = {object}.{field}{}", if *method_callee { " callee" } else { "" })
            }
            InstrKind::FieldWrite { object, field, value } => write!(f, "{object}.{field} <- {value}"),
            InstrKind::BinOp { result, op, operands } => write!(f, "{result} = binop {op:?}({})", regs(operands)),
            InstrKind::Build { result, items } => write!(f, "{result} = build({})", regs(items)),
            InstrKind::MakeFunction { result, proc, defaults } => {
                let d: Vec<String> = defaults.iter().map(|(i, r)| format!("{i}:{r}")).collect();
                write!(f, "{result} = function {proc} [{}]", d.join(", "))
            }
            InstrKind::MakeClass { result, class, bases, site } => {
                write!(f, "{result} = class {site} {class}({})", regs(bases))
            }
            InstrKind::Import { result, dotted, site } => write!(f, "{result} = import {site} {dotted:?}"),
            InstrKind::Return { value } => write!(f, "return {value}"),
            InstrKind::Unsupported { what, result } => match result {
                Some(r) => write!(f, "{r} = unsupported {what:?}"),
                None => write!(f, "unsupported {what:?}"),
            },
        }
    }
}
