mod common;

use std::collections::BTreeSet;

use common::{all_fixture_files, brute_force_backward, run};
use turtleflow::dfg::{DataflowGraph, EdgeKind};
use turtleflow::mlfilter::{filter_graph, is_ml_node, FilterError, MlFilterConfig};

fn labels(g: &DataflowGraph) -> Vec<&str> {
    let mut v: Vec<&str> = g.nodes.iter().map(|n| n.label.as_str()).collect();
    v.sort();
    v
}

fn configs() -> Vec<MlFilterConfig> {
    let mut out = Vec::new();
    for roots in [vec!["sklearn"], vec!["pystruct", "numpy"]] {
        for keep in [true, false] {
            let mut c = MlFilterConfig::with_roots(roots.clone()).unwrap();
            c.keep_argument_edges = keep;
            out.push(c);
        }
    }
    out
}

#[test]
fn pystruct_roots_keep_the_model_chain() {
    let r = run(&["running_example.py"]);
    let f = filter_graph(&r.graph, &MlFilterConfig::with_roots(["pystruct"]).unwrap());
    assert_eq!(labels(&f.graph), ["FrankWolfeSSVM", "MultiClassClf", "fit", "fit"]);
    let kinds: Vec<(&str, &str, EdgeKind)> = f
        .graph
        .edges
        .iter()
        .map(|e| (f.graph.node(e.src).label.as_str(), f.graph.node(e.dst).label.as_str(), e.kind))
        .collect();
    assert_eq!(kinds.len(), 3);
    assert!(kinds.contains(&("MultiClassClf", "FrankWolfeSSVM", EdgeKind::ArgumentFlow)));
    assert_eq!(kinds.iter().filter(|k| **k == ("FrankWolfeSSVM", "fit", EdgeKind::ReceiverFlow)).count(), 2);
}

#[test]
fn empty_roots_are_rejected() {
    assert!(matches!(MlFilterConfig::with_roots(Vec::<String>::new()), Err(FilterError::NoRoots)));
    assert!(matches!(MlFilterConfig::with_roots([" "]), Err(FilterError::EmptyRoot)));
}

#[test]
fn roots_match_whole_segments() {
    let r = run(&["running_example.py"]);
    let cfg = MlFilterConfig::with_roots(["sk"]).unwrap();
    assert!(r.graph.nodes.iter().all(|n| !is_ml_node(n, &cfg)));
    assert!(filter_graph(&r.graph, &cfg).graph.nodes.is_empty());
}

#[test]
fn provenance_points_at_matching_nodes() {
    for f in all_fixture_files() {
        let g = run(&[&f]).graph;
        for cfg in configs() {
            let out = filter_graph(&g, &cfg);
            assert_eq!(out.provenance.len(), out.graph.nodes.len());
            for (new, &old) in out.provenance.iter().enumerate() {
                assert_eq!(out.graph.nodes[new].label, g.nodes[old].label, "{f}");
            }
            for e in &out.graph.edges {
                let (s, d) = (out.provenance[e.src], out.provenance[e.dst]);
                assert!(g.edges.iter().any(|o| o.src == s && o.dst == d && o.kind == e.kind), "{f}");
            }
        }
    }
}

/// Kept nodes are ML nodes and nodes on a path between two of them, found
/// by searching backward from each ML node and forward (on the reversed
/// graph) from each ML node.
#[test]
fn kept_nodes_match_path_oracle() {
    for f in all_fixture_files() {
        let g = run(&[&f]).graph;
        for cfg in configs() {
            let edges: Vec<(usize, usize)> = g
                .edges
                .iter()
                .filter(|e| cfg.keep_argument_edges || e.kind == EdgeKind::ReceiverFlow)
                .map(|e| (e.src, e.dst))
                .collect();
            let reversed: Vec<(usize, usize)> = edges.iter().map(|&(s, d)| (d, s)).collect();
            let ml: Vec<usize> = g.nodes.iter().filter(|n| is_ml_node(n, &cfg)).map(|n| n.id).collect();
            let mut above = BTreeSet::new();
            let mut below = BTreeSet::new();
            for &m in &ml {
                above.extend(brute_force_backward(g.nodes.len(), &edges, m));
                below.extend(brute_force_backward(g.nodes.len(), &reversed, m));
            }
            let want: BTreeSet<usize> = ml.iter().copied().chain(above.intersection(&below).copied()).collect();
            let got: BTreeSet<usize> = filter_graph(&g, &cfg).provenance.into_iter().collect();
            assert_eq!(got, want, "{f}");
        }
    }
}

#[test]
fn filtering_is_idempotent() {
    for f in all_fixture_files() {
        let g = run(&[&f]).graph;
        for cfg in configs() {
            let once = filter_graph(&g, &cfg).graph;
            let twice = filter_graph(&once, &cfg).graph;
            assert_eq!(once, twice, "{f}");
        }
    }
}
