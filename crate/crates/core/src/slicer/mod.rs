//! Backward slices of dataflow graphs and code-completion examples built
//! from them.

pub mod tokens;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::callgraph::ProducerKind;
use crate::dfg::DataflowGraph;
use crate::frontend::ast::{Ast, ExprKind, Stmt, StmtKind};
use crate::frontend::ir::IrProgram;
use crate::span::{Position, SourceSpan};

pub use tokens::{count_tokens, tokenize, Token, TokenKind};

/// Line placed between the complete text and the slice in `combined`.
pub const SEPARATOR: &str = "# <SLICE>";

pub const DEFAULT_N_TOKENS: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SliceError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("no source for {0}")]
    MissingSource(String),
    #[error("{file}:{line}:{col}: span outside file")]
    Integrity { file: String, line: u32, col: u32 },
    #[error("{file}: tokenizer stopped before the prediction point: {message}")]
    Tokenize { file: String, message: String },
}

/// Source files of a program with the assignment targets needed to name
/// rendered expressions.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    files: HashMap<Arc<str>, SourceFile>,
}

#[derive(Debug, Clone)]
struct SourceFile {
    ast: Arc<Ast>,
    /// Value span of `name = value` statements to the name.
    assigned: HashMap<(Position, Position), String>,
}

fn collect_assignments(stmts: &[Stmt], out: &mut HashMap<(Position, Position), String>) {
    for s in stmts {
        if let StmtKind::Assign { targets, value } = &s.kind {
            if let [t] = targets.as_slice() {
                if let ExprKind::Name(n) = &t.kind {
                    out.insert((value.span.start(), value.span.end()), n.clone());
                }
            }
        }
        for b in s.bodies() {
            collect_assignments(b, out);
        }
    }
}

impl Sources {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, ast: Arc<Ast>) {
        let mut assigned = HashMap::new();
        collect_assignments(&ast.body, &mut assigned);
        self.files.insert(ast.span.file.clone(), SourceFile { ast, assigned });
    }

    pub fn from_program(program: &IrProgram) -> Self {
        let mut s = Self::new();
        for m in &program.modules {
            s.add(m.ast.clone());
        }
        s
    }

    pub fn ast(&self, file: &str) -> Option<&Arc<Ast>> {
        self.files.get(file).map(|f| &f.ast)
    }

    fn file(&self, file: &str) -> Result<&SourceFile, SliceError> {
        self.files.get(file).ok_or_else(|| SliceError::MissingSource(file.to_string()))
    }
}

fn integrity(span: &SourceSpan) -> SliceError {
    SliceError::Integrity { file: span.file.to_string(), line: span.start_line, col: span.start_col }
}

/// Call nodes written in the source with no successors and at least one
/// predecessor.
pub fn enumerate_candidate_leaves(g: &DataflowGraph) -> Vec<usize> {
    let mut has_out = vec![false; g.nodes.len()];
    let mut has_in = vec![false; g.nodes.len()];
    for e in &g.edges {
        has_out[e.src] = true;
        has_in[e.dst] = true;
    }
    g.nodes
        .iter()
        .filter(|n| matches!(n.kind, ProducerKind::CallResult | ProducerKind::TurtleResult) && !n.synthetic)
        .filter(|n| !has_out[n.id] && has_in[n.id])
        .map(|n| n.id)
        .collect()
}

/// Nodes from which `target` is reachable, including `target`.
pub fn backward_slice(g: &DataflowGraph, target: usize) -> Result<BTreeSet<usize>, SliceError> {
    if target >= g.nodes.len() {
        return Err(SliceError::UnknownNode(target));
    }
    let preds = g.predecessors();
    let mut seen = BTreeSet::new();
    let mut stack = vec![target];
    while let Some(n) = stack.pop() {
        if seen.insert(n) {
            stack.extend(preds[n].iter().copied());
        }
    }
    Ok(seen)
}

/// Join a possibly multi-line expression onto one line.
fn one_line(text: &str) -> String {
    let mut out = String::new();
    for (i, l) in text.lines().enumerate() {
        let l = if i == 0 { l.trim_end() } else { l.trim() };
        if l.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(l);
    }
    out
}

/// A rendered slice line with its sort key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Line {
    file: Arc<str>,
    at: Position,
    text: String,
}

/// Render slice nodes as ordered source lines. When `target` is given, its
/// line is cut at the callee name and ends with `?`.
pub fn render_slice(
    g: &DataflowGraph,
    nodes: &BTreeSet<usize>,
    target: Option<usize>,
    sources: &Sources,
) -> Result<String, SliceError> {
    for &n in nodes.iter().chain(target.iter()) {
        if n >= g.nodes.len() {
            return Err(SliceError::UnknownNode(n));
        }
    }
    let spans: Vec<&SourceSpan> = nodes.iter().map(|&n| &g.nodes[n].span).collect();
    let mut lines: BTreeSet<Line> = BTreeSet::new();
    let mut seen_spans = BTreeSet::new();
    for &n in nodes {
        let node = &g.nodes[n];
        let file = sources.file(&node.span.file)?;
        for &l in &node.imports {
            let text = file.ast.lines.line_text(&file.ast.source, l).ok_or_else(|| integrity(&node.span))?;
            let at = Position::new(l, 1);
            lines.insert(Line { file: node.span.file.clone(), at, text: text.trim().to_string() });
        }
        if Some(n) == target || target.is_some_and(|t| g.nodes[t].span == node.span) {
            continue;
        }
        if spans.iter().any(|s| s.strictly_contains(&node.span)) {
            continue;
        }
        if !seen_spans.insert(node.span.clone()) {
            continue;
        }
        let text = file.ast.lines.slice(&file.ast.source, &node.span).ok_or_else(|| integrity(&node.span))?;
        let mut text = one_line(text);
        if let Some(var) = file.assigned.get(&(node.span.start(), node.span.end())) {
            text = format!("{var} = {text}");
        }
        lines.insert(Line { file: node.span.file.clone(), at: node.span.start(), text });
    }
    if let Some(t) = target {
        let node = &g.nodes[t];
        let file = sources.file(&node.span.file)?;
        let line = file.ast.lines.line_text(&file.ast.source, node.name_pos.line).ok_or_else(|| integrity(&node.span))?;
        let cut = line.get(..node.name_pos.col as usize - 1).ok_or_else(|| integrity(&node.span))?;
        lines.insert(Line { file: node.span.file.clone(), at: node.span.start(), text: format!("{cut}?") });
    }
    let mut out = String::new();
    for l in &lines {
        out.push_str(&l.text);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompletionExample {
    pub file: String,
    pub target_span: SourceSpan,
    /// Position of the masked callee name.
    pub line: u32,
    pub col: u32,
    pub label: String,
    pub complete: String,
    pub slice: String,
    pub combined: String,
    /// Tokens in `complete`.
    pub n_tokens: usize,
}

impl CompletionExample {
    /// One JSONL record with sorted keys.
    pub fn to_jsonl(&self) -> String {
        json!({
            "file": self.file,
            "line": self.line,
            "col": self.col,
            "label": self.label,
            "complete": self.complete,
            "slice": self.slice,
            "combined": self.combined,
            "n_tokens": self.n_tokens,
        })
        .to_string()
    }
}

/// The last `n_tokens` tokens before byte offset `at`, as source text.
pub fn token_window(source: &str, at: usize, n_tokens: usize) -> Result<(String, usize), String> {
    let toks = tokenize(source);
    let before: Vec<&Token> = toks.tokens.iter().filter(|t| t.end <= at && t.kind.counted()).collect();
    if let Some((off, msg)) = &toks.error {
        if *off < at {
            return Err(msg.clone());
        }
    }
    let start = match n_tokens {
        0 => at,
        n if before.len() <= n => 0,
        n => before[before.len() - n].start,
    };
    let n = before.len().min(n_tokens);
    Ok((source[start..at].to_string(), n))
}

/// Build the completion example for `target`.
pub fn make_example(
    g: &DataflowGraph,
    target: usize,
    sources: &Sources,
    n_tokens: usize,
) -> Result<CompletionExample, SliceError> {
    let nodes = backward_slice(g, target)?;
    let node = &g.nodes[target];
    let file = sources.file(&node.span.file)?;
    let at = file.ast.lines.offset(node.name_pos).ok_or_else(|| integrity(&node.span))?;
    let (complete, counted) = token_window(&file.ast.source, at, n_tokens)
        .map_err(|message| SliceError::Tokenize { file: node.span.file.to_string(), message })?;
    let slice = render_slice(g, &nodes, Some(target), sources)?;
    let combined = format!("{complete}\n{SEPARATOR}\n{slice}");
    Ok(CompletionExample {
        file: node.span.file.to_string(),
        target_span: node.span.clone(),
        line: node.name_pos.line,
        col: node.name_pos.col,
        label: node.label.clone(),
        complete,
        slice,
        combined,
        n_tokens: counted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_keeps_last_tokens() {
        let src = "a = 1\nb = a.f";
        let at = src.len() - 1;
        let (text, n) = token_window(src, at, 3).unwrap();
        assert_eq!(text, "= a.");
        assert_eq!(n, 3);
        let (all, n) = token_window(src, at, 100).unwrap();
        assert_eq!(all, "a = 1\nb = a.");
        assert_eq!(n, 8);
    }

    #[test]
    fn joins_lines() {
        assert_eq!(one_line("f(a,\n      b)"), "f(a, b)");
    }
}
