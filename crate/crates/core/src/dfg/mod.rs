//! Dataflow graph over producer nodes.
//!
//! Nodes are the value-producing instructions the analysis tracked
//! (turtle call results, user call results, field reads, local expressions).
//! An edge `a -> b` means a value produced at `a` is consumed by `b`, either
//! as the receiver/operand ([`EdgeKind::ReceiverFlow`]) or as a plain
//! argument ([`EdgeKind::ArgumentFlow`]).

mod export;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::callgraph::{AnalysisResult, Behavior, CgProc, Loc, Producer, ProducerKind};
use crate::frontend::ir::{InstrKind, IrProgram, ProcId};
use crate::span::{Position, SourceSpan};

pub use export::{parse_dot, DotGraph, ExportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    ReceiverFlow,
    ArgumentFlow,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::ReceiverFlow => "ReceiverFlow",
            EdgeKind::ArgumentFlow => "ArgumentFlow",
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            EdgeKind::ReceiverFlow => "black",
            EdgeKind::ArgumentFlow => "red",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfNode {
    pub id: usize,
    pub kind: ProducerKind,
    pub label: String,
    pub span: SourceSpan,
    /// Start of the callee or attribute name for calls and reads.
    pub name_pos: Position,
    /// Qualified name of the enclosing procedure.
    pub proc: String,
    pub context: String,
    /// Turtle paths produced here (turtle calls only).
    pub turtles: Vec<String>,
    /// First lines of import statements whose values feed this node.
    pub imports: Vec<u32>,
    /// Call introduced by lowering rather than written in the source
    /// (decorator applications).
    pub synthetic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DfEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataflowGraph {
    pub nodes: Vec<DfNode>,
    pub edges: Vec<DfEdge>,
    /// Name of the entry module.
    pub entry: Option<String>,
    /// Hex SHA-256 of the entry module's source.
    pub digest: Option<String>,
}

impl DataflowGraph {
    pub fn node(&self, id: usize) -> &DfNode {
        &self.nodes[id]
    }

    pub fn in_edges(&self, id: usize) -> impl Iterator<Item = &DfEdge> {
        self.edges.iter().filter(move |e| e.dst == id)
    }

    pub fn out_edges(&self, id: usize) -> impl Iterator<Item = &DfEdge> {
        self.edges.iter().filter(move |e| e.src == id)
    }

    /// Nodes with the given label, in id order.
    pub fn by_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a DfNode> {
        self.nodes.iter().filter(move |n| n.label == label)
    }

    /// Predecessor lists indexed by node id.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            preds[e.dst].push(e.src);
        }
        for p in &mut preds {
            p.sort_unstable();
            p.dedup();
        }
        preds
    }

    pub fn to_json(&self) -> String {
        export::to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ExportError> {
        export::from_json(text)
    }

    pub fn to_dot(&self) -> String {
        export::to_dot(self)
    }
}

/// Collapse runs of whitespace (including newlines) to single spaces.
pub fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn source_digest(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Input {
    loc: Loc,
    kind: EdgeKind,
}

/// Build the dataflow graph of an analysis result.
pub fn build(result: &AnalysisResult, program: &IrProgram) -> DataflowGraph {
    // Instruction lookup per procedure.
    let mut index: HashMap<ProcId, HashMap<u32, (usize, usize)>> = HashMap::new();
    let proc_of = |p: &Producer| match result.nodes[p.node as usize].proc {
        CgProc::User(q) => Some(q),
        _ => None,
    };

    let mut inputs: BTreeMap<Producer, Vec<Input>> = BTreeMap::new();
    for p in &result.producers {
        let Some(q) = proc_of(p) else { continue };
        let proc = program.proc(q);
        let idx = index.entry(q).or_insert_with(|| {
            let mut m = HashMap::new();
            for (bi, b) in proc.blocks.iter().enumerate() {
                for (ii, ins) in b.instrs.iter().enumerate() {
                    m.insert(ins.id.0, (bi, ii));
                }
            }
            m
        });
        let (bi, ii) = idx[&p.instr.0];
        let ins = &proc.blocks[bi].instrs[ii];
        let reg = |r| Loc::Reg(p.node, r);
        let r = |loc| Input { loc, kind: EdgeKind::ReceiverFlow };
        let a = |loc| Input { loc, kind: EdgeKind::ArgumentFlow };
        let list = match &ins.kind {
            InstrKind::Call(c) => {
                let mut v = vec![r(reg(c.callee))];
                v.extend(c.receiver.map(|x| r(reg(x))));
                v.extend(c.args.iter().map(|x| a(reg(*x))));
                v.extend(c.star_args.iter().map(|x| a(reg(*x))));
                v.extend(c.keywords.iter().map(|(_, x)| a(reg(*x))));
                v
            }
            InstrKind::FieldRead { object, .. } => vec![r(reg(*object)), r(Loc::Input(p.node, p.instr))],
            InstrKind::BinOp { operands, .. } => operands.iter().map(|x| r(reg(*x))).collect(),
            _ => vec![],
        };
        inputs.insert(*p, list);
    }

    // Local expressions only count when something tracked flows into them.
    let mut kept: BTreeSet<Producer> =
        result.producers.iter().filter(|p| p.kind != ProducerKind::LocalExpr && proc_of(p).is_some()).copied().collect();
    loop {
        let mut grew = false;
        for p in result.producers.iter().filter(|p| p.kind == ProducerKind::LocalExpr) {
            if kept.contains(p) || proc_of(p).is_none() {
                continue;
            }
            let fed = inputs[p].iter().any(|i| result.producers_at(&i.loc).iter().any(|s| kept.contains(s)));
            if fed {
                kept.insert(*p);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }

    let mut nodes: Vec<(Producer, DfNode)> = Vec::new();
    for p in &kept {
        let q = proc_of(p).expect("user producer");
        let proc = program.proc(q);
        let module = program.module(q.module);
        let (bi, ii) = index[&q][&p.instr.0];
        let ins = &proc.blocks[bi].instrs[ii];
        let (label, name_pos) = match &ins.kind {
            InstrKind::Call(c) => (c.site_name.clone(), c.name_pos),
            InstrKind::FieldRead { field, name_pos, .. } => (field.clone(), *name_pos),
            InstrKind::Param { index, .. } => (proc.params[*index as usize].name.clone(), ins.span.start()),
            _ => (collapse_ws(module.ast.text(&ins.span)), ins.span.start()),
        };
        let turtles = match &ins.kind {
            InstrKind::Call(c) if p.kind == ProducerKind::TurtleResult => result
                .behaviors
                .get(&(p.node, c.site))
                .into_iter()
                .flatten()
                .filter_map(|b| match b {
                    Behavior::Turtle { path } => Some(path.clone()),
                    _ => None,
                })
                .collect(),
            _ => vec![],
        };
        let mut imports = BTreeSet::new();
        for i in &inputs[p] {
            for s in result.imports_at(&i.loc) {
                imports.insert(program.site(s).span.start_line);
            }
        }
        nodes.push((
            *p,
            DfNode {
                id: 0,
                kind: p.kind,
                label,
                span: ins.span.clone(),
                name_pos,
                proc: proc.qualified_name.clone(),
                context: result.nodes[p.node as usize].context.to_string(),
                turtles,
                imports: imports.into_iter().collect(),
                synthetic: matches!(&ins.kind, InstrKind::Call(c) if !c.explicit),
            },
        ));
    }
    nodes.sort_by(|(pa, a), (pb, b)| {
        (&a.span.file, a.span.start(), a.span.end(), a.kind, &a.proc, &a.context, pa).cmp(&(
            &b.span.file,
            b.span.start(),
            b.span.end(),
            b.kind,
            &b.proc,
            &b.context,
            pb,
        ))
    });
    let ids: HashMap<Producer, usize> = nodes.iter().enumerate().map(|(i, (p, _))| (*p, i)).collect();

    let mut edges = BTreeSet::new();
    for (p, _) in &nodes {
        let dst = ids[p];
        for i in &inputs[p] {
            for s in result.producers_at(&i.loc) {
                if let Some(&src) = ids.get(&s) {
                    if src != dst {
                        edges.insert(DfEdge { src, dst, kind: i.kind });
                    }
                }
            }
        }
    }

    let entry = program.module(result.entry);
    DataflowGraph {
        nodes: nodes
            .into_iter()
            .enumerate()
            .map(|(i, (_, mut n))| {
                n.id = i;
                n
            })
            .collect(),
        edges: edges.into_iter().collect(),
        entry: Some(entry.name.clone()),
        digest: Some(source_digest(&entry.ast.source)),
    }
}
