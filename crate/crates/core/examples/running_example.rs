//! Build the call graph and dataflow graph of the bundled SVM script and
//! print the graph as DOT.
//!
//! cargo run --example running_example [-- path/to/script.py]

use std::path::PathBuf;

use turtleflow::callgraph::{self, AnalysisConfig};
use turtleflow::dfg;
use turtleflow::frontend::ir::IrProgram;

fn main() {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/running_example.py")
    });
    let mut program = IrProgram::default();
    let entry = program.add_file(&path, path.parent()).expect("parse");
    let result = callgraph::build(&program, entry, &AnalysisConfig::default()).expect("analysis");
    let graph = dfg::build(&result, &program);
    eprintln!(
        "{} call graph nodes, {} dataflow nodes, {} edges",
        result.nodes.len(),
        graph.nodes.len(),
        graph.edges.len()
    );
    print!("{}", graph.to_dot());
}
