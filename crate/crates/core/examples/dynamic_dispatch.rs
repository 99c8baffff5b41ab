//! Show what each call site resolves to: user functions, class creations,
//! callbacks or turtles standing in for library code.
//!
//! cargo run --example dynamic_dispatch

use turtleflow::callgraph::{self, AnalysisConfig, Behavior};
use turtleflow::frontend::ir::IrProgram;

const SOURCE: &str = "\
from sklearn.svm import LinearSVC
from base import Model

class Scaled(Model):
    def run(self, data):
        return self.transform(data)

def pick(fast):
    if fast:
        return LinearSVC
    return Scaled

def report(x):
    print(x)

clf = pick(True)()
clf.fit([[0]], [1])
sorted([3, 1], key=report)
";

fn main() {
    let program = IrProgram::from_source(SOURCE, "dispatch.py").expect("parse");
    let result = callgraph::build(&program, 0, &AnalysisConfig::default()).expect("analysis");
    for site in &program.module(0).sites {
        let names: Vec<String> = result
            .site_behaviors(site.id)
            .into_iter()
            .map(|b| match b {
                Behavior::Create { class } | Behavior::NewOverride { class, .. } => {
                    format!("create {}", program.proc(class).qualified_name)
                }
                Behavior::Call { proc } | Behavior::BoundCall { proc } | Behavior::ModuleCall { proc, .. } => {
                    format!("call {}", program.proc(proc).qualified_name)
                }
                Behavior::Callback { proc } => format!("callback {}", program.proc(proc).qualified_name),
                Behavior::Turtle { path } => format!("turtle {path}"),
                Behavior::Builtin { name } => format!("builtin {name}"),
            })
            .collect();
        println!("{}:{} {:<10} {}", site.span.start_line, site.span.start_col, site.name, names.join(", "));
    }
    println!("restarts: {}", result.restarts);
}
