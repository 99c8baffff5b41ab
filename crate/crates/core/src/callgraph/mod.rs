//! Call graph and points-to construction.
//!
//! The analysis is a flow-insensitive, subset-based propagation over the IR.
//! Every call site is resolved by dispatching on the abstract types that
//! reach its callee register; library values are [`AnalysisType::Turtle`]s
//! named by the dotted path of operations that produced them.

mod solver;
pub mod turtle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::ir::{InstrId, IrProgram, ModuleId, ProcId, Reg, SiteId};

pub type NodeId = u32;
pub type AtomId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnalysisType {
    ClassObject(ProcId),
    InstanceOf(ProcId),
    ModuleInstance(ModuleId),
    ScriptInstance(ModuleId),
    FunctionInstance { proc: ProcId, env: Option<NodeId> },
    BoundMethod { proc: ProcId, env: Option<NodeId>, receiver: Box<AnalysisType> },
    Turtle(Arc<str>),
}

impl AnalysisType {
    pub fn turtle(path: &str) -> Self {
        AnalysisType::Turtle(Arc::from(path))
    }

    pub fn turtle_path(&self) -> Option<&str> {
        match self {
            AnalysisType::Turtle(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for AnalysisType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisType::ClassObject(p) => write!(f, "class({p})"),
            AnalysisType::InstanceOf(p) => write!(f, "inst({p})"),
            AnalysisType::ModuleInstance(m) => write!(f, "module({m})"),
            AnalysisType::ScriptInstance(m) => write!(f, "script({m})"),
            AnalysisType::FunctionInstance { proc, env } => match env {
                Some(e) => write!(f, "func({proc}@n{e})"),
                None => write!(f, "func({proc})"),
            },
            AnalysisType::BoundMethod { proc, receiver, .. } => write!(f, "bound({proc}, {receiver})"),
            AnalysisType::Turtle(p) => write!(f, "turtle({p})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextKey {
    Default,
    Site(SiteId),
}

impl fmt::Display for ContextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextKey::Default => write!(f, "default"),
            ContextKey::Site(s) => write!(f, "site {s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CgProc {
    /// Synthetic stub that creates and runs the entry script.
    Root,
    User(ProcId),
    /// Synthetic turtle method; one per call site.
    Turtle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CgNode {
    pub proc: CgProc,
    pub context: ContextKey,
    /// Node whose execution created the closure this node runs in.
    pub env: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProducerKind {
    TurtleResult,
    CallResult,
    FieldRead,
    LocalExpr,
    Param,
    Const,
}

impl ProducerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProducerKind::TurtleResult => "TurtleResult",
            ProducerKind::CallResult => "CallResult",
            ProducerKind::FieldRead => "FieldRead",
            ProducerKind::LocalExpr => "LocalExpr",
            ProducerKind::Param => "Param",
            ProducerKind::Const => "Const",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "TurtleResult" => ProducerKind::TurtleResult,
            "CallResult" => ProducerKind::CallResult,
            "FieldRead" => ProducerKind::FieldRead,
            "LocalExpr" => ProducerKind::LocalExpr,
            "Param" => ProducerKind::Param,
            "Const" => ProducerKind::Const,
            _ => return None,
        })
    }
}

/// A value-producing instruction evaluated in a call-graph node. These
/// become dataflow graph nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Producer {
    pub node: NodeId,
    pub instr: InstrId,
    pub kind: ProducerKind,
}

/// Element of a points-to set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Obj(AnalysisType),
    /// Tag carried by values that came from a producer, used to build
    /// dataflow edges.
    Prod(Producer),
    /// Tag carried by values bound by an import statement.
    Imp(SiteId),
}

/// What a call site did for one of its callee values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Behavior {
    Create { class: ProcId },
    NewOverride { class: ProcId, new: ProcId },
    Call { proc: ProcId },
    BoundCall { proc: ProcId },
    ModuleCall { module: ModuleId, proc: ProcId },
    Turtle { path: String },
    Callback { proc: ProcId },
    /// A modeled builtin such as `len` or `print`.
    Builtin { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PendingTurtleRead {
    pub node: NodeId,
    pub instr: InstrId,
    pub class: ProcId,
    pub field: String,
    pub callee: bool,
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// Per-call-site contexts for user procedures too.
    pub user_site_context: bool,
    pub max_restarts: u32,
    pub max_turtle_depth: usize,
    pub time_budget: Option<Duration>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { user_site_context: false, max_restarts: 10, max_turtle_depth: 8, time_budget: None }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("{}: analysis budget exceeded: {reason}", file.display())]
    Budget { file: PathBuf, reason: String },
    #[error("unknown entry module {0}")]
    UnknownEntry(ModuleId),
}

/// Points-to locations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    Reg(NodeId, Reg),
    Var(NodeId, Arc<str>),
    Global(ModuleId, Arc<str>),
    Field(AtomId, Arc<str>),
    Param(NodeId, u32),
    Ret(NodeId),
    Input(NodeId, InstrId),
    Defaults(ProcId, u32),
    Bases(ProcId),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Distinct (node, site, value) triples with no callable meaning.
    pub uncallable: usize,
    pub unresolved_enclosing: usize,
}

/// Final state of the analysis.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub entry: ModuleId,
    pub(crate) atoms: Vec<Atom>,
    pub(crate) atom_ids: std::collections::HashMap<Atom, AtomId>,
    pub(crate) locs: std::collections::HashMap<Loc, usize>,
    pub(crate) sets: Vec<BTreeSet<AtomId>>,
    pub nodes: Vec<CgNode>,
    /// (caller, site) to callees. The root's edge has no site.
    pub edges: BTreeMap<(NodeId, Option<SiteId>), BTreeSet<NodeId>>,
    pub behaviors: BTreeMap<(NodeId, SiteId), BTreeSet<Behavior>>,
    pub producers: BTreeSet<Producer>,
    pub pending: BTreeSet<PendingTurtleRead>,
    /// (class, field) pairs converted to turtle reads.
    pub turtle_reads: BTreeSet<(ProcId, String)>,
    pub restarts: u32,
    /// Number of reachable nodes after each propagation pass.
    pub restart_history: Vec<usize>,
    pub diagnostics: Diagnostics,
}

pub const ROOT: NodeId = 0;

/// Run the analysis with `entry` as the main script.
pub fn build(program: &IrProgram, entry: ModuleId, config: &AnalysisConfig) -> Result<AnalysisResult, AnalysisError> {
    solver::Solver::new(program, entry, config)?.run()
}

impl AnalysisResult {
    pub fn atom(&self, id: AtomId) -> &Atom {
        &self.atoms[id as usize]
    }

    pub fn atoms_at(&self, loc: &Loc) -> Vec<&Atom> {
        match self.locs.get(loc) {
            Some(&i) => self.sets[i].iter().map(|a| &self.atoms[*a as usize]).collect(),
            None => Vec::new(),
        }
    }

    pub fn objects_at(&self, loc: &Loc) -> BTreeSet<AnalysisType> {
        self.atoms_at(loc)
            .into_iter()
            .filter_map(|a| match a {
                Atom::Obj(t) => Some(t.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn producers_at(&self, loc: &Loc) -> BTreeSet<Producer> {
        self.atoms_at(loc)
            .into_iter()
            .filter_map(|a| match a {
                Atom::Prod(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    pub fn imports_at(&self, loc: &Loc) -> BTreeSet<SiteId> {
        self.atoms_at(loc)
            .into_iter()
            .filter_map(|a| match a {
                Atom::Imp(s) => Some(*s),
                _ => None,
            })
            .collect()
    }

    pub fn reg(&self, node: NodeId, reg: Reg) -> BTreeSet<AnalysisType> {
        self.objects_at(&Loc::Reg(node, reg))
    }

    pub fn global(&self, module: ModuleId, name: &str) -> BTreeSet<AnalysisType> {
        self.objects_at(&Loc::Global(module, Arc::from(name)))
    }

    /// Field contents of an abstract object.
    pub fn field(&self, object: &AnalysisType, name: &str) -> BTreeSet<AnalysisType> {
        match self.atom_ids.get(&Atom::Obj(object.clone())) {
            Some(&id) => self.objects_at(&Loc::Field(id, Arc::from(name))),
            None => BTreeSet::new(),
        }
    }

    /// Values a procedure may return, across all of its nodes.
    pub fn returns(&self, proc: ProcId) -> BTreeSet<AnalysisType> {
        self.nodes_of(proc).into_iter().flat_map(|n| self.objects_at(&Loc::Ret(n))).collect()
    }

    /// Values bound to a parameter, across all nodes of the procedure.
    pub fn param(&self, proc: ProcId, index: u32) -> BTreeSet<AnalysisType> {
        self.nodes_of(proc).into_iter().flat_map(|n| self.objects_at(&Loc::Param(n, index))).collect()
    }

    /// Values of a local variable across all nodes of the procedure.
    pub fn local(&self, proc: ProcId, name: &str) -> BTreeSet<AnalysisType> {
        let name: Arc<str> = Arc::from(name);
        self.nodes_of(proc).into_iter().flat_map(|n| self.objects_at(&Loc::Var(n, name.clone()))).collect()
    }

    pub fn nodes_of(&self, proc: ProcId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.proc == CgProc::User(proc))
            .map(|(i, _)| i as NodeId)
            .collect()
    }

    pub fn reachable_procs(&self) -> BTreeSet<ProcId> {
        self.nodes
            .iter()
            .filter_map(|n| match n.proc {
                CgProc::User(p) => Some(p),
                _ => None,
            })
            .collect()
    }

    pub fn is_reachable(&self, proc: ProcId) -> bool {
        self.nodes.iter().any(|n| n.proc == CgProc::User(proc))
    }

    /// Union of behaviors recorded at a site over all caller nodes.
    pub fn site_behaviors(&self, site: SiteId) -> BTreeSet<Behavior> {
        self.behaviors
            .iter()
            .filter(|((_, s), _)| *s == site)
            .flat_map(|(_, b)| b.iter().cloned())
            .collect()
    }

    /// Callee nodes of a site over all caller nodes.
    pub fn site_targets(&self, site: SiteId) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .filter(|((_, s), _)| *s == Some(site))
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    /// Sites that resolved to at least one behavior.
    pub fn resolved_sites(&self) -> BTreeSet<SiteId> {
        self.behaviors.iter().filter(|(_, b)| !b.is_empty()).map(|((_, s), _)| *s).collect()
    }

    pub fn node_label(&self, program: &IrProgram, id: NodeId) -> String {
        let n = &self.nodes[id as usize];
        let proc = match n.proc {
            CgProc::Root => "<root>".to_string(),
            CgProc::Turtle => "<turtle>".to_string(),
            CgProc::User(p) => {
                let m = program.module(p.module);
                format!("{}:{}", m.name, program.proc(p).qualified_name)
            }
        };
        match n.context {
            ContextKey::Default => proc,
            ContextKey::Site(s) => format!("{proc}[{s}]"),
        }
    }

    /// Stable textual edge list, used by `--dump-callgraph`.
    pub fn dump(&self, program: &IrProgram) -> String {
        let mut out = String::new();
        for (i, _) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "node n{i} {}", self.node_label(program, i as NodeId));
        }
        for ((caller, site), callees) in &self.edges {
            for c in callees {
                let site = site.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
                let _ = writeln!(out, "edge n{caller} {site} -> n{c}");
            }
        }
        for ((caller, site), bs) in &self.behaviors {
            for b in bs {
                let _ = writeln!(out, "behavior n{caller} {site} {b:?}");
            }
        }
        let _ = writeln!(out, "restarts {}", self.restarts);
        out
    }
}
