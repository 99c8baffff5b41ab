//! Static analysis of Python programs with library calls abstracted as
//! opaque "turtle" objects.
//!
//! The pipeline is: [`frontend`] parses and lowers source files, [`callgraph`]
//! runs the points-to/call-graph fixpoint, [`dfg`] extracts the dataflow
//! graph, [`slicer`] turns leaves of that graph into code-completion
//! examples and [`mlfilter`] reduces graphs to machine-learning API usage.

pub mod callgraph;
pub mod dfg;
pub mod driver;
pub mod frontend;
pub mod mlfilter;
pub mod slicer;
pub mod span;

pub use span::{LineIndex, Position, SourceSpan};
