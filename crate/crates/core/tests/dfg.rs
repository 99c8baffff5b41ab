mod common;

use std::collections::BTreeSet;

use common::{all_fixture_files, golden, isomorphic, run, run_source, shape_of};
use turtleflow::callgraph::ProducerKind;
use turtleflow::dfg::{parse_dot, DataflowGraph, EdgeKind};

fn edge(g: &DataflowGraph, src: &str, dst: &str) -> Vec<EdgeKind> {
    g.edges
        .iter()
        .filter(|e| g.node(e.src).label == src && g.node(e.dst).label == dst)
        .map(|e| e.kind)
        .collect()
}

#[test]
fn running_example_matches_golden() {
    let r = run(&["running_example.py"]);
    let want = parse_dot(&std::fs::read_to_string(golden("running_example.dot")).unwrap()).unwrap();
    assert!(isomorphic(&shape_of(&r.graph), &want), "{}", r.graph.to_dot());
}

#[test]
fn argument_flow_between_turtle_calls() {
    let r = run_source("import m\na = m.g()\nb = m.h(a)\n");
    assert_eq!(edge(&r.graph, "g", "h"), [EdgeKind::ArgumentFlow]);
}

#[test]
fn receiver_flow_between_turtle_calls() {
    let r = run_source("import m\na = m.g()\nb = a.h()\n");
    assert_eq!(edge(&r.graph, "g", "h"), [EdgeKind::ReceiverFlow]);
}

#[test]
fn lone_turtle_call_is_a_single_node() {
    let r = run_source("import m\nm.f()\n");
    assert_eq!(r.graph.nodes.len(), 1);
    assert!(r.graph.edges.is_empty());
    let n = &r.graph.nodes[0];
    assert_eq!((n.kind, n.label.as_str()), (ProducerKind::TurtleResult, "f"));
    assert_eq!(n.turtles, ["m.f"]);
    assert_eq!(n.imports, [1]);
}

#[test]
fn empty_program_has_empty_outputs() {
    let r = run_source("");
    assert!(r.graph.nodes.is_empty());
    let back = DataflowGraph::from_json(&r.graph.to_json()).unwrap();
    assert_eq!(back, r.graph);
    let dot = parse_dot(&r.graph.to_dot()).unwrap();
    assert!(dot.labels.is_empty() && dot.edges.is_empty());
}

#[test]
fn json_round_trips() {
    for f in all_fixture_files() {
        let g = run(&[&f]).graph;
        let back = DataflowGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g, "{f}");
    }
}

#[test]
fn dot_and_json_agree() {
    for f in all_fixture_files() {
        let g = run(&[&f]).graph;
        let dot = parse_dot(&g.to_dot()).unwrap();
        let json: BTreeSet<_> = g.edges.iter().map(|e| (e.src, e.dst, e.kind)).collect();
        assert_eq!(dot.edges, json, "{f}");
        let labels: Vec<_> = g.nodes.iter().map(|n| (n.id, n.label.clone())).collect();
        assert_eq!(dot.labels, labels, "{f}");
    }
}

#[test]
fn dot_colors_follow_edge_kind() {
    let g = run(&["running_example.py"]).graph;
    let dot = g.to_dot();
    let red = dot.lines().filter(|l| l.contains("->") && l.contains("color=red")).count();
    let black = dot.lines().filter(|l| l.contains("->") && l.contains("color=black")).count();
    assert_eq!(red, g.edges.iter().filter(|e| e.kind == EdgeKind::ArgumentFlow).count());
    assert_eq!(black, g.edges.iter().filter(|e| e.kind == EdgeKind::ReceiverFlow).count());
}

#[test]
fn graphs_are_deterministic() {
    for f in all_fixture_files() {
        assert_eq!(run(&[&f]).graph.to_json(), run(&[&f]).graph.to_json(), "{f}");
    }
}

#[test]
fn edges_are_sorted_unique_and_in_range() {
    for f in all_fixture_files() {
        let g = run(&[&f]).graph;
        assert!(g.edges.windows(2).all(|w| w[0] < w[1]), "{f}");
        assert!(g.edges.iter().all(|e| e.src < g.nodes.len() && e.dst < g.nodes.len() && e.src != e.dst), "{f}");
        assert!(g.nodes.iter().enumerate().all(|(i, n)| n.id == i), "{f}");
    }
}

#[test]
fn entry_digest_is_recorded() {
    let r = run(&["running_example.py"]);
    let src = std::fs::read_to_string(common::fixture("running_example.py")).unwrap();
    assert_eq!(r.graph.digest.as_deref(), Some(turtleflow::dfg::source_digest(&src).as_str()));
    assert_eq!(r.graph.entry.as_deref(), Some("running_example"));
}

#[test]
fn malformed_json_is_rejected() {
    assert!(DataflowGraph::from_json("{").is_err());
    assert!(DataflowGraph::from_json(r#"{"nodes": [], "edges": [{"src": 0, "dst": 1, "kind": "ReceiverFlow"}]}"#).is_err());
}
