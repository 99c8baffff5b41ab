//! Analyze a directory of scripts in parallel and print call coverage and
//! the most frequent completion labels.
//!
//! cargo run --example corpus_stats [-- dir [workers]]

use turtleflow::driver::{corpus_stats, RunConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus").to_string());
    let cfg = RunConfig {
        inputs: vec![dir],
        workers: args.next().map(|w| w.parse().expect("workers")).unwrap_or(2),
        ..RunConfig::default()
    };
    let (stats, summary) = corpus_stats(&cfg).expect("config");
    for e in &summary.errors {
        eprintln!("{} [{}]: {}", e.file, e.stage, e.message);
    }
    let pct = |n: usize| 100.0 * n as f64 / stats.ast_calls_total.max(1) as f64;
    println!("files analyzed: {} of {}", stats.files_analyzed, stats.files_total);
    println!("calls resolved at their location: {:.1}%", pct(stats.calls_matched_with_location));
    println!("calls resolved by name: {:.1}%", pct(stats.calls_matched_relaxed));
    let mut labels: Vec<(&String, &usize)> = stats.label_counts.iter().collect();
    labels.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    for (label, n) in labels.iter().take(10) {
        println!("{n:>5}  {label}");
    }
}
