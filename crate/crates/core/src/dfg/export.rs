//! JSON and DOT forms of a dataflow graph.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use super::{DataflowGraph, DfEdge, DfNode, EdgeKind};
use crate::callgraph::ProducerKind;
use crate::span::{Position, SourceSpan};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("invalid graph json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid graph: {0}")]
    Shape(String),
}

fn node_json(n: &DfNode) -> Value {
    json!({
        "id": n.id,
        "kind": n.kind.as_str(),
        "label": n.label,
        "file": &*n.span.file,
        "line": n.span.start_line,
        "col": n.span.start_col,
        "end_line": n.span.end_line,
        "end_col": n.span.end_col,
        "name_line": n.name_pos.line,
        "name_col": n.name_pos.col,
        "proc": n.proc,
        "context": n.context,
        "turtles": n.turtles,
        "imports": n.imports,
        "synthetic": n.synthetic,
    })
}

/// Value form with sorted keys.
pub fn to_value(g: &DataflowGraph) -> Value {
    let mut root = json!({
        "nodes": g.nodes.iter().map(node_json).collect::<Vec<_>>(),
        "edges": g.edges.iter().map(|e| json!({"src": e.src, "dst": e.dst, "kind": e.kind.as_str()})).collect::<Vec<_>>(),
    });
    if let Some(entry) = &g.entry {
        root["entry"] = json!(entry);
    }
    if let Some(d) = &g.digest {
        root["digest"] = json!(d);
    }
    root
}

pub fn to_json(g: &DataflowGraph) -> String {
    to_value(g).to_string()
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, ExportError> {
    v.get(key).ok_or_else(|| ExportError::Shape(format!("missing key {key:?}")))
}

fn num(v: &Value, key: &str) -> Result<u64, ExportError> {
    field(v, key)?.as_u64().ok_or_else(|| ExportError::Shape(format!("{key:?} is not a number")))
}

fn text<'a>(v: &'a Value, key: &str) -> Result<&'a str, ExportError> {
    field(v, key)?.as_str().ok_or_else(|| ExportError::Shape(format!("{key:?} is not a string")))
}

fn edge_kind(s: &str) -> Result<EdgeKind, ExportError> {
    match s {
        "ReceiverFlow" => Ok(EdgeKind::ReceiverFlow),
        "ArgumentFlow" => Ok(EdgeKind::ArgumentFlow),
        _ => Err(ExportError::Shape(format!("unknown edge kind {s:?}"))),
    }
}

pub fn from_json(s: &str) -> Result<DataflowGraph, ExportError> {
    let v: Value = serde_json::from_str(s)?;
    let mut g = DataflowGraph::default();
    let nodes = field(&v, "nodes")?.as_array().ok_or_else(|| ExportError::Shape("nodes is not a list".into()))?;
    for (i, n) in nodes.iter().enumerate() {
        let id = num(n, "id")? as usize;
        if id != i {
            return Err(ExportError::Shape(format!("node ids are not dense at {i}")));
        }
        let kind_s = text(n, "kind")?;
        let kind = ProducerKind::parse(kind_s).ok_or_else(|| ExportError::Shape(format!("unknown kind {kind_s:?}")))?;
        let file: Arc<str> = Arc::from(text(n, "file")?);
        let line = num(n, "line")? as u32;
        let col = num(n, "col")? as u32;
        let end_line = n.get("end_line").and_then(Value::as_u64).map(|x| x as u32).unwrap_or(line);
        let end_col = n.get("end_col").and_then(Value::as_u64).map(|x| x as u32).unwrap_or(col);
        let span = SourceSpan::new(file, Position { line, col }, Position { line: end_line, col: end_col });
        let name_pos = match (n.get("name_line").and_then(Value::as_u64), n.get("name_col").and_then(Value::as_u64)) {
            (Some(l), Some(c)) => Position { line: l as u32, col: c as u32 },
            _ => span.start(),
        };
        let strings = |key: &str| -> Vec<String> {
            n.get(key)
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|x| x.as_str().map(String::from)).collect())
                .unwrap_or_default()
        };
        g.nodes.push(DfNode {
            id,
            kind,
            label: text(n, "label")?.to_string(),
            span,
            name_pos,
            proc: text(n, "proc")?.to_string(),
            context: n.get("context").and_then(Value::as_str).unwrap_or("default").to_string(),
            turtles: strings("turtles"),
            imports: n
                .get("imports")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|x| x.as_u64().map(|l| l as u32)).collect())
                .unwrap_or_default(),
            synthetic: n.get("synthetic").and_then(Value::as_bool).unwrap_or(false),
        });
    }
    let edges = field(&v, "edges")?.as_array().ok_or_else(|| ExportError::Shape("edges is not a list".into()))?;
    for e in edges {
        let src = num(e, "src")? as usize;
        let dst = num(e, "dst")? as usize;
        if src >= g.nodes.len() || dst >= g.nodes.len() {
            return Err(ExportError::Shape(format!("dangling edge {src} -> {dst}")));
        }
        g.edges.push(DfEdge { src, dst, kind: edge_kind(text(e, "kind")?)? });
    }
    g.entry = v.get("entry").and_then(Value::as_str).map(String::from);
    g.digest = v.get("digest").and_then(Value::as_str).map(String::from);
    Ok(g)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(g: &DataflowGraph) -> String {
    let mut out = String::from("digraph dataflow {\n");
    for n in &g.nodes {
        let style = if n.kind == ProducerKind::TurtleResult { ", style=filled, fillcolor=green" } else { "" };
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\", kind=\"{}\", proc=\"{}\", line={}{}];",
            n.id,
            escape(&n.label),
            n.kind.as_str(),
            escape(&n.proc),
            n.span.start_line,
            style
        );
    }
    for e in &g.edges {
        let _ = writeln!(out, "  n{} -> n{} [color={}, kind=\"{}\"];", e.src, e.dst, e.kind.color(), e.kind.as_str());
    }
    out.push_str("}\n");
    out
}

/// Node labels and edges recovered from DOT text written by [`to_dot`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DotGraph {
    pub labels: Vec<(usize, String)>,
    pub edges: BTreeSet<(usize, usize, EdgeKind)>,
}

fn node_ref(s: &str) -> Option<usize> {
    s.trim().strip_prefix('n')?.parse().ok()
}

/// Parse a `[k=v, k="v", ...]` attribute list.
fn attrs(list: &str) -> Result<Vec<(String, String)>, ExportError> {
    let inner = list.trim().trim_start_matches('[').trim_end_matches(']');
    let mut out = Vec::new();
    let mut chars = inner.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace() || *c == ',').is_some() {}
        let mut key = String::new();
        while let Some(c) = chars.next_if(|c| *c != '=') {
            key.push(c);
        }
        if key.trim().is_empty() {
            return Ok(out);
        }
        if chars.next() != Some('=') {
            return Err(ExportError::Shape(format!("attribute {key:?} has no value")));
        }
        let mut value = String::new();
        if chars.next_if_eq(&'"').is_some() {
            loop {
                match chars.next() {
                    Some('\\') => value.extend(chars.next()),
                    Some('"') => break,
                    Some(c) => value.push(c),
                    None => return Err(ExportError::Shape("unterminated string".into())),
                }
            }
        } else {
            while let Some(c) = chars.next_if(|c| *c != ',') {
                value.push(c);
            }
        }
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
}

fn attr(list: &[(String, String)], key: &str) -> Option<String> {
    list.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
}

/// Parse the DOT subset emitted by this crate.
pub fn parse_dot(text: &str) -> Result<DotGraph, ExportError> {
    let mut g = DotGraph::default();
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(l) if l.starts_with("digraph") && l.ends_with('{') => {}
        _ => return Err(ExportError::Shape("missing digraph header".into())),
    }
    for line in lines {
        if line == "}" {
            return Ok(g);
        }
        let stmt = line.trim_end_matches(';');
        let (head, list) = match stmt.find('[') {
            Some(i) => (&stmt[..i], attrs(&stmt[i..])?),
            None => (stmt, Vec::new()),
        };
        if let Some((a, b)) = head.split_once("->") {
            let (Some(src), Some(dst)) = (node_ref(a), node_ref(b)) else {
                return Err(ExportError::Shape(format!("bad edge statement {line:?}")));
            };
            let kind = match (attr(&list, "kind"), attr(&list, "color")) {
                (Some(k), _) => edge_kind(&k)?,
                (None, Some(c)) if c == "red" => EdgeKind::ArgumentFlow,
                _ => EdgeKind::ReceiverFlow,
            };
            g.edges.insert((src, dst, kind));
        } else if let Some(id) = node_ref(head) {
            g.labels.push((id, attr(&list, "label").unwrap_or_default()));
        } else {
            return Err(ExportError::Shape(format!("unrecognized statement {line:?}")));
        }
    }
    Err(ExportError::Shape("unterminated digraph".into()))
}
