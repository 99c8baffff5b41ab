//! Reduction of dataflow graphs to machine-learning library usage.

use std::collections::{BTreeSet, HashMap};

use serde_json::{json, Value};
use thiserror::Error;

use crate::callgraph::turtle::has_root;
use crate::callgraph::ProducerKind;
use crate::dfg::{DataflowGraph, DfEdge, DfNode, EdgeKind};

pub const DEFAULT_ROOTS: [&str; 3] = ["sklearn", "xgboost", "lightgbm"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("no target library roots given")]
    NoRoots,
    #[error("empty library root")]
    EmptyRoot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlFilterConfig {
    pub target_roots: BTreeSet<String>,
    pub keep_argument_edges: bool,
}

impl Default for MlFilterConfig {
    fn default() -> Self {
        MlFilterConfig { target_roots: DEFAULT_ROOTS.iter().map(|s| s.to_string()).collect(), keep_argument_edges: true }
    }
}

impl MlFilterConfig {
    pub fn with_roots<I, S>(roots: I) -> Result<Self, FilterError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let target_roots: BTreeSet<String> = roots.into_iter().map(Into::into).collect();
        let cfg = MlFilterConfig { target_roots, keep_argument_edges: true };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.target_roots.is_empty() {
            return Err(FilterError::NoRoots);
        }
        if self.target_roots.iter().any(|r| r.trim().is_empty()) {
            return Err(FilterError::EmptyRoot);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredGraph {
    pub graph: DataflowGraph,
    /// Original id of each kept node, indexed by new id.
    pub provenance: Vec<usize>,
}

impl FilteredGraph {
    /// JSON without source locations.
    pub fn to_json(&self) -> String {
        let nodes: Vec<Value> = self
            .graph
            .nodes
            .iter()
            .map(|n| {
                json!({
                    "id": n.id,
                    "kind": n.kind.as_str(),
                    "label": n.label,
                    "proc": n.proc,
                    "turtles": n.turtles,
                })
            })
            .collect();
        let edges: Vec<Value> = self
            .graph
            .edges
            .iter()
            .map(|e| json!({"src": e.src, "dst": e.dst, "kind": e.kind.as_str()}))
            .collect();
        json!({"nodes": nodes, "edges": edges}).to_string()
    }

    pub fn to_dot(&self) -> String {
        self.graph.to_dot()
    }
}

pub fn is_ml_node(node: &DfNode, cfg: &MlFilterConfig) -> bool {
    node.kind == ProducerKind::TurtleResult
        && node.turtles.iter().any(|p| cfg.target_roots.iter().any(|r| has_root(p, r)))
}

fn reach(start: &[usize], adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<usize> = start.to_vec();
    while let Some(n) = stack.pop() {
        for &m in &adj[n] {
            if !seen[m] {
                seen[m] = true;
                stack.push(m);
            }
        }
    }
    seen
}

/// Keep ML nodes and the nodes lying on paths between two of them.
pub fn filter_graph(g: &DataflowGraph, cfg: &MlFilterConfig) -> FilteredGraph {
    let n = g.nodes.len();
    let ml: Vec<usize> = g.nodes.iter().filter(|x| is_ml_node(x, cfg)).map(|x| x.id).collect();
    let allowed: Vec<&DfEdge> =
        g.edges.iter().filter(|e| cfg.keep_argument_edges || e.kind == EdgeKind::ReceiverFlow).collect();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for e in &allowed {
        succ[e.src].push(e.dst);
        pred[e.dst].push(e.src);
    }
    // Strictly after / strictly before some ML node.
    let below = reach(&ml, &succ);
    let above = reach(&ml, &pred);
    let is_ml: BTreeSet<usize> = ml.iter().copied().collect();
    let kept: Vec<usize> = (0..n).filter(|&i| is_ml.contains(&i) || (below[i] && above[i])).collect();
    let new_id: HashMap<usize, usize> = kept.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let nodes = kept
        .iter()
        .enumerate()
        .map(|(i, &o)| DfNode { id: i, ..g.nodes[o].clone() })
        .collect();
    let edges: BTreeSet<DfEdge> = allowed
        .iter()
        .filter_map(|e| Some(DfEdge { src: *new_id.get(&e.src)?, dst: *new_id.get(&e.dst)?, kind: e.kind }))
        .collect();
    FilteredGraph {
        graph: DataflowGraph { nodes, edges: edges.into_iter().collect(), entry: g.entry.clone(), digest: g.digest.clone() },
        provenance: kept,
    }
}
