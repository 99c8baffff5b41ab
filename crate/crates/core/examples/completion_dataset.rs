//! Turn every candidate leaf of a script into a completion example and
//! print the examples as JSON lines.
//!
//! cargo run --example completion_dataset [-- script.py [n_tokens]]

use std::path::PathBuf;

use turtleflow::callgraph::{self, AnalysisConfig};
use turtleflow::dfg;
use turtleflow::frontend::ir::IrProgram;
use turtleflow::slicer::{enumerate_candidate_leaves, make_example, Sources};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/multi_class_svm.py")
    });
    let n_tokens = args.next().map(|n| n.parse().expect("n_tokens")).unwrap_or(64);
    let mut program = IrProgram::default();
    let entry = program.add_file(&path, path.parent()).expect("parse");
    let result = callgraph::build(&program, entry, &AnalysisConfig::default()).expect("analysis");
    let graph = dfg::build(&result, &program);
    let sources = Sources::from_program(&program);
    for leaf in enumerate_candidate_leaves(&graph) {
        match make_example(&graph, leaf, &sources, n_tokens) {
            Ok(ex) => {
                eprintln!("--- {}:{} {}\n{}", ex.line, ex.col, ex.label, ex.slice);
                println!("{}", ex.to_jsonl());
            }
            Err(e) => eprintln!("skipped node {leaf}: {e}"),
        }
    }
}
