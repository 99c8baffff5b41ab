#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use turtleflow::callgraph::{self, AnalysisConfig, AnalysisResult};
use turtleflow::dfg::{self, DataflowGraph, DotGraph, EdgeKind};
use turtleflow::frontend::ir::{IrProgram, ModuleId, ProcId};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn golden(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(rel)
}

pub struct Run {
    pub program: IrProgram,
    pub entry: ModuleId,
    pub result: AnalysisResult,
    pub graph: DataflowGraph,
}

/// Analyze fixture files, the first being the entry. Module names are
/// relative to the entry's directory.
pub fn run_with(files: &[&str], cfg: &AnalysisConfig) -> Run {
    let paths: Vec<PathBuf> = files.iter().map(|f| fixture(f)).collect();
    let root = paths[0].parent().unwrap().to_path_buf();
    let mut program = IrProgram::default();
    let mut entry = 0;
    for (i, p) in paths.iter().enumerate() {
        let id = program.add_file(p, Some(&root)).unwrap();
        if i == 0 {
            entry = id;
        }
    }
    let result = callgraph::build(&program, entry, cfg).unwrap();
    let graph = dfg::build(&result, &program);
    Run { program, entry, result, graph }
}

pub fn run(files: &[&str]) -> Run {
    run_with(files, &AnalysisConfig::default())
}

pub fn run_source(src: &str) -> Run {
    let program = IrProgram::from_source(src, "prog.py").unwrap();
    let result = callgraph::build(&program, 0, &AnalysisConfig::default()).unwrap();
    let graph = dfg::build(&result, &program);
    Run { program, entry: 0, result, graph }
}

pub fn proc_named(program: &IrProgram, qualified: &str) -> ProcId {
    let found: Vec<ProcId> = program.procs().filter(|p| p.qualified_name == qualified).map(|p| p.id).collect();
    assert_eq!(found.len(), 1, "procedures named {qualified}: {found:?}");
    found[0]
}

/// Labels and kinded edges of a graph, in the shape of a parsed DOT file.
pub fn shape_of(g: &DataflowGraph) -> DotGraph {
    DotGraph {
        labels: g.nodes.iter().map(|n| (n.id, n.label.clone())).collect(),
        edges: g.edges.iter().map(|e| (e.src, e.dst, e.kind)).collect(),
    }
}

/// Whether two labeled graphs with kinded edges are isomorphic, by
/// backtracking over label-compatible assignments.
pub fn isomorphic(a: &DotGraph, b: &DotGraph) -> bool {
    if a.labels.len() != b.labels.len() || a.edges.len() != b.edges.len() {
        return false;
    }
    let index = |g: &DotGraph| -> BTreeMap<usize, usize> { g.labels.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect() };
    let (ia, ib) = (index(a), index(b));
    let n = a.labels.len();
    let mut adj_a = vec![vec![None; n]; n];
    let mut adj_b = vec![vec![None; n]; n];
    for &(s, d, k) in &a.edges {
        adj_a[ia[&s]][ia[&d]] = Some(k);
    }
    for &(s, d, k) in &b.edges {
        adj_b[ib[&s]][ib[&d]] = Some(k);
    }
    let sig = |adj: &Vec<Vec<Option<EdgeKind>>>, i: usize| {
        let out: Vec<EdgeKind> = adj[i].iter().flatten().copied().collect();
        let inn: Vec<EdgeKind> = adj.iter().filter_map(|row| row[i]).collect();
        let mut o = out.clone();
        o.sort();
        let mut x = inn.clone();
        x.sort();
        (o, x)
    };
    let cands: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| a.labels[i].1 == b.labels[j].1 && sig(&adj_a, i) == sig(&adj_b, j)).collect())
        .collect();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn go(
        i: usize,
        cands: &[Vec<usize>],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        a: &[Vec<Option<EdgeKind>>],
        b: &[Vec<Option<EdgeKind>>],
    ) -> bool {
        if i == cands.len() {
            return true;
        }
        for &j in &cands[i] {
            if used[j] {
                continue;
            }
            let ok = (0..i).all(|k| a[i][k] == b[j][map[k]] && a[k][i] == b[map[k]][j]) && a[i][i] == b[j][j];
            if ok {
                map[i] = j;
                used[j] = true;
                if go(i + 1, cands, map, used, a, b) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    go(0, &cands, &mut map, &mut used, &adj_a, &adj_b)
}

/// Backward reachability by recursive search over an adjacency matrix.
pub fn brute_force_backward(n: usize, edges: &[(usize, usize)], target: usize) -> BTreeSet<usize> {
    let mut m = vec![vec![false; n]; n];
    for &(s, d) in edges {
        m[d][s] = true;
    }
    fn visit(v: usize, m: &[Vec<bool>], seen: &mut Vec<bool>) {
        seen[v] = true;
        for u in 0..m.len() {
            if m[v][u] && !seen[u] {
                visit(u, m, seen);
            }
        }
    }
    let mut seen = vec![false; n];
    visit(target, &m, &mut seen);
    (0..n).filter(|&v| seen[v]).collect()
}

/// Every `.py` file under the fixtures directory, relative to it.
pub fn all_fixture_files() -> Vec<String> {
    let base = fixture("");
    let mut out: Vec<String> = walkdir(&base)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "py"))
        .map(|p| p.strip_prefix(&base).unwrap().to_string_lossy().replace('\\', "/"))
        .collect();
    out.sort();
    out
}

fn walkdir(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walkdir(&p));
        } else {
            out.push(p);
        }
    }
    out
}

pub fn corpus_dir() -> PathBuf {
    fixture("corpus")
}

pub mod gen {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use proptest::prelude::*;
    use turtleflow::callgraph::{AnalysisType, Behavior, ProducerKind};
    use turtleflow::dfg::{DataflowGraph, DfEdge, DfNode, EdgeKind};
    use turtleflow::frontend::ir::ProcKind;
    use turtleflow::{Position, SourceSpan};

    use super::{proc_named, run_source};

    /// A library member, a chain of calls on it, field reads on the result
    /// and functions handed to a library call.
    #[derive(Debug, Clone)]
    pub struct ChainCase {
        pub lib: Vec<String>,
        pub base: String,
        pub chain: Vec<String>,
        pub fields: Vec<String>,
        pub hook: String,
        /// One callback function per entry; `true` passes it by keyword.
        pub callbacks: Vec<bool>,
        pub lambda: bool,
    }

    fn ident(prefix: &'static str) -> impl Strategy<Value = String> {
        "[a-z][a-z0-9]{0,5}".prop_map(move |s| format!("{prefix}{s}"))
    }

    pub fn chain_case() -> impl Strategy<Value = ChainCase> {
        (
            prop::collection::vec(ident("pkg"), 1..3),
            ident("Base"),
            prop::collection::vec(ident("m_"), 1..9),
            prop::collection::vec(ident("f_"), 1..4),
            ident("on_"),
            prop::collection::vec(any::<bool>(), 0..3),
            any::<bool>(),
        )
            .prop_map(|(lib, base, chain, fields, hook, callbacks, lambda)| ChainCase {
                lib,
                base,
                chain,
                fields,
                hook,
                callbacks,
                lambda,
            })
    }

    impl ChainCase {
        pub fn source(&self) -> String {
            let mut s = format!("from {} import {}\n\n", self.lib.join("."), self.base);
            for i in 0..self.callbacks.len() {
                s += &format!("def cb{i}(a, b=None):\n    return a\n\n");
            }
            let calls: String = self.chain.iter().map(|m| format!(".{m}()")).collect();
            s += &format!("v = {}{}\n", self.base, calls);
            let reads: String = self.fields.iter().map(|f| format!(".{f}")).collect();
            s += &format!("w = v{reads}\n");
            let mut args: Vec<String> = self
                .callbacks
                .iter()
                .enumerate()
                .map(|(i, kw)| if *kw { format!("k{i}=cb{i}") } else { format!("cb{i}") })
                .collect();
            // Positional arguments first.
            args.sort_by_key(|a| a.starts_with('k'));
            if self.lambda {
                args.insert(0, "lambda z: z".to_string());
            }
            s += &format!("h = w.{}({})\n", self.hook, args.join(", "));
            s
        }

        /// Expected path of `v`: every segment, or the first seven followed by
        /// the truncation marker when longer than eight.
        pub fn expected_path(&self) -> String {
            let mut segs: Vec<String> = self.lib.clone();
            segs.push(self.base.clone());
            segs.extend(self.chain.iter().cloned());
            if segs.len() > 8 {
                segs.truncate(7);
                segs.push("…".to_string());
            }
            segs.join(".")
        }

        pub fn check(&self) -> Result<(), String> {
            let src = self.source();
            let r = run_source(&src);
            let v = r.result.global(0, "v");
            let want: BTreeSet<AnalysisType> = [AnalysisType::turtle(&self.expected_path())].into();
            if v != want {
                return Err(format!("path of v is {v:?}, expected {want:?}\n{src}"));
            }
            let w = r.result.global(0, "w");
            if w != v {
                return Err(format!("field reads changed the value: {w:?} vs {v:?}\n{src}"));
            }
            for i in 0..self.callbacks.len() {
                let p = proc_named(&r.program, &format!("cb{i}"));
                if !r.result.is_reachable(p) {
                    return Err(format!("cb{i} unreachable\n{src}"));
                }
                if !r.result.param(p, 0).iter().any(|t| t.turtle_path().is_some()) {
                    return Err(format!("cb{i} received no turtle\n{src}"));
                }
            }
            for p in r.program.procs().filter(|p| p.kind == ProcKind::Lambda) {
                if !r.result.is_reachable(p.id) {
                    return Err(format!("lambda unreachable\n{src}"));
                }
            }
            let hooks = r.graph.by_label(&self.hook).filter(|n| n.kind == ProducerKind::TurtleResult).count();
            if hooks != 1 {
                return Err(format!("{hooks} turtle nodes for the hook call\n{src}"));
            }
            let n_callbacks = r
                .result
                .behaviors
                .values()
                .flatten()
                .filter(|b| matches!(b, Behavior::Callback { .. }))
                .count();
            let want = self.callbacks.len() + self.lambda as usize;
            if n_callbacks != want {
                return Err(format!("{n_callbacks} callback behaviors, expected {want}\n{src}"));
            }
            Ok(())
        }
    }

    #[derive(Debug, Clone)]
    pub struct Dag {
        pub n: usize,
        pub edges: Vec<(usize, usize, bool)>,
        pub target: usize,
    }

    /// Random DAGs of up to `max` nodes whose ids are not in topological
    /// order.
    pub fn dag(max: usize) -> impl Strategy<Value = Dag> {
        (1..=max)
            .prop_flat_map(|n| {
                let pairs = prop::collection::vec((0..n, 0..n, any::<bool>()), 0..=(n * 3));
                (Just(n), pairs, Just((0..n).collect::<Vec<usize>>()).prop_shuffle(), 0..n)
            })
            .prop_map(|(n, pairs, perm, target)| {
                let mut seen = BTreeSet::new();
                let mut edges = Vec::new();
                for (a, b, k) in pairs {
                    if a == b {
                        continue;
                    }
                    let (lo, hi) = (a.min(b), a.max(b));
                    if seen.insert((lo, hi)) {
                        edges.push((perm[lo], perm[hi], k));
                    }
                }
                Dag { n, edges, target }
            })
    }

    impl Dag {
        pub fn graph(&self) -> DataflowGraph {
            let file: Arc<str> = Arc::from("dag.py");
            let nodes = (0..self.n)
                .map(|i| {
                    let at = Position::new(i as u32 + 1, 1);
                    DfNode {
                        id: i,
                        kind: ProducerKind::CallResult,
                        label: format!("f{i}"),
                        span: SourceSpan::new(file.clone(), at, Position::new(i as u32 + 1, 4)),
                        name_pos: at,
                        proc: "<module>".into(),
                        context: "default".into(),
                        turtles: vec![],
                        imports: vec![],
                        synthetic: false,
                    }
                })
                .collect();
            let edges = self
                .edges
                .iter()
                .map(|&(src, dst, k)| DfEdge {
                    src,
                    dst,
                    kind: if k { EdgeKind::ArgumentFlow } else { EdgeKind::ReceiverFlow },
                })
                .collect();
            DataflowGraph { nodes, edges, entry: None, digest: None }
        }

        pub fn plain_edges(&self) -> Vec<(usize, usize)> {
            self.edges.iter().map(|&(s, d, _)| (s, d)).collect()
        }
    }
}
