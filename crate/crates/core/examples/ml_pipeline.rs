//! Reduce a dataflow graph to the calls into chosen ML libraries and the
//! dataflow between them.
//!
//! cargo run --example ml_pipeline [-- script.py root[,root...]]

use std::path::PathBuf;

use turtleflow::callgraph::{self, AnalysisConfig};
use turtleflow::dfg;
use turtleflow::frontend::ir::IrProgram;
use turtleflow::mlfilter::{filter_graph, MlFilterConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/running_example.py")
    });
    let roots: Vec<String> = args.next().map(|r| r.split(',').map(String::from).collect()).unwrap_or_else(|| {
        vec!["sklearn".into(), "pystruct".into()]
    });
    let cfg = MlFilterConfig::with_roots(roots).expect("roots");
    let mut program = IrProgram::default();
    let entry = program.add_file(&path, path.parent()).expect("parse");
    let result = callgraph::build(&program, entry, &AnalysisConfig::default()).expect("analysis");
    let graph = dfg::build(&result, &program);
    let ml = filter_graph(&graph, &cfg);
    eprintln!("kept {} of {} nodes", ml.graph.nodes.len(), graph.nodes.len());
    for e in &ml.graph.edges {
        let (s, d) = (ml.graph.node(e.src), ml.graph.node(e.dst));
        eprintln!("  {} -> {} ({})", s.label, d.label, e.kind.as_str());
    }
    println!("{}", ml.to_json());
}
