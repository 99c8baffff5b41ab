//! Acceptance checks. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestCaseError, TestRunner};
use turtleflow::callgraph::{AnalysisConfig, AnalysisType, Behavior, ProducerKind};
use turtleflow::dfg::{parse_dot, EdgeKind};
use turtleflow::driver::{self, RunConfig};
use turtleflow::frontend::ir::{ProcKind, SiteKind};
use turtleflow::frontend::{collect_ast_calls, parse_source};
use turtleflow::mlfilter::{filter_graph, MlFilterConfig};
use turtleflow::slicer::{backward_slice, count_tokens, render_slice, Sources};

use common::gen::{chain_case, dag};
use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dispatch_suite() -> Outcome {
    let t = Instant::now();
    let r = run(&["dispatch/main.py", "dispatch/X.py"]);
    let elapsed = t.elapsed();
    let p = &r.program;
    let site = p
        .modules[r.entry as usize]
        .sites
        .iter()
        .find(|s| s.kind == SiteKind::Call && s.name == "X")
        .ok_or("no X() site")?
        .id;
    let by = |name: &str, kind: ProcKind| -> Vec<_> {
        p.procs().filter(|q| q.qualified_name == name && q.kind == kind && q.id.module == r.entry).map(|q| q.id).collect()
    };
    let classes = by("X", ProcKind::ClassBody);
    check(classes.len() == 2, || format!("expected two classes X, got {classes:?}"))?;
    let init = proc_named(p, "X.__init__");
    let new = proc_named(p, "X.__new__");
    let (class1, class2) = if p.proc(init).parent == Some(classes[0]) { (classes[0], classes[1]) } else { (classes[1], classes[0]) };
    let def1 = by("X", ProcKind::Function);
    check(def1.len() == 1, || "expected one def X".into())?;
    let lambda: Vec<_> = p.procs().filter(|q| q.kind == ProcKind::Lambda && q.id.module == r.entry).map(|q| q.id).collect();
    check(lambda.len() == 1, || "expected one lambda".into())?;
    let static_s = proc_named(p, "Y.s");
    let inst_i = proc_named(p, "Y.i");
    let module_x = p.module_by_name("X").ok_or("module X not loaded")?;
    let call = p.procs().find(|q| q.id.module == module_x && q.qualified_name == "__call__").ok_or("no X.__call__")?.id;

    let got = r.result.site_behaviors(site);
    let cases = [
        ("class1 creation", Behavior::Create { class: class1 }, init),
        ("class2 __new__", Behavior::NewOverride { class: class2, new }, new),
        ("def1", Behavior::Call { proc: def1[0] }, def1[0]),
        ("lambda", Behavior::Call { proc: lambda[0] }, lambda[0]),
        ("callable module", Behavior::ModuleCall { module: module_x, proc: call }, call),
        ("static method", Behavior::Call { proc: static_s }, static_s),
        ("bound instance method", Behavior::BoundCall { proc: inst_i }, inst_i),
    ];
    for (name, b, body) in &cases {
        check(got.contains(b), || format!("{name}: behavior {b:?} missing from {got:?}"))?;
        check(r.result.is_reachable(*body), || format!("{name}: body unreachable"))?;
    }
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("7/7 behaviors with reachable bodies in {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn golden_graph() -> Outcome {
    let t = Instant::now();
    let r = run(&["running_example.py"]);
    let elapsed = t.elapsed();
    let text = std::fs::read_to_string(golden("running_example.dot")).map_err(|e| e.to_string())?;
    let want = parse_dot(&text).map_err(|e| e.to_string())?;
    let got = shape_of(&r.graph);
    check(isomorphic(&got, &want), || {
        format!("not isomorphic: {} nodes/{} edges vs golden {}/{}", got.labels.len(), got.edges.len(), want.labels.len(), want.edges.len())
    })?;
    let g = &r.graph;
    let fits: Vec<_> = g.by_label("fit").collect();
    let procs: BTreeSet<&str> = fits.iter().map(|n| n.proc.as_str()).collect();
    check(procs == ["<lambda:10>", "fd"].into(), || format!("fit nodes in {procs:?}"))?;
    for model in ["LinearSVC", "FrankWolfeSSVM"] {
        let m = g.by_label(model).next().ok_or(format!("no {model} node"))?.id;
        for f in &fits {
            check(g.edges.iter().any(|e| e.src == m && e.dst == f.id && e.kind == EdgeKind::ReceiverFlow), || {
                format!("no ReceiverFlow {model} -> fit in {}", f.proc)
            })?;
        }
    }
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("isomorphic to golden ({} nodes, {} edges) in {:.1} ms", g.nodes.len(), g.edges.len(), elapsed.as_secs_f64() * 1e3))
}

/// Expression list of the slice for `fw_bc_svm.fit`.
const FIT_SLICE: &[&str] = &[
    "from sklearn.cross_validation import train_test_split",
    "from pystruct.models import MultiClassClf",
    "from pystruct.learners import (NSlackSSVM, OneSlackSSVM,",
    "digits = load_digits()",
    "digits.data",
    "digits.target",
    "X = X / 16.",
    "train_test_split(X, y)",
    "X_train_bias = np.hstack([X_train, np.ones((X_train.shape[0], 1))])",
    "model = MultiClassClf(n_features=X_train_bias.shape[1], n_classes=10)",
    "fw_bc_svm = FrankWolfeSSVM(model, C=.1, max_iter=50)",
    "fw_bc_svm.?",
];

fn norm(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn golden_slice() -> Outcome {
    let r = run(&["multi_class_svm.py"]);
    let g = &r.graph;
    let target = g
        .by_label("fit")
        .find(|n| n.kind == ProducerKind::TurtleResult && n.turtles.iter().any(|t| t.contains("FrankWolfeSSVM")) && n.proc == "<module>")
        .ok_or("no fit-on-FrankWolfeSSVM node")?
        .id;
    let sources = Sources::from_program(&r.program);
    let nodes = backward_slice(g, target).map_err(|e| e.to_string())?;
    let text = render_slice(g, &nodes, Some(target), &sources).map_err(|e| e.to_string())?;
    let got: Vec<String> = text.lines().map(norm).collect();
    let want: Vec<String> = FIT_SLICE.iter().map(|l| norm(l)).collect();
    check(got == want, || format!("slice differs:\n{text}"))?;
    Ok(format!("{} lines, ending `fw_bc_svm.?`", got.len()))
}

fn turtle_algebra() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    runner
        .run(&chain_case(), |case| case.check().map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())?;
    Ok("200 chained-call programs, 0 failures".into())
}

fn slice_oracle() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 500, failure_persistence: None, ..Config::default() });
    runner
        .run(&dag(50), |d| {
            let got = backward_slice(&d.graph(), d.target).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let want = brute_force_backward(d.n, &d.plain_edges(), d.target);
            if got != want {
                return Err(TestCaseError::fail(format!("{got:?} != {want:?}")));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("500 random DAGs agree with the reference search".into())
}

fn restart_fixpoint() -> Outcome {
    let r = run(&["restart.py"]);
    let p = &r.program;
    check(r.result.restarts == 2, || format!("{} restarts", r.result.restarts))?;
    let go = proc_named(p, "First.go");
    let make_second = proc_named(p, "make_second");
    let run_ = proc_named(p, "make_second.Second.run");
    let second = proc_named(p, "make_second.Second");
    for (name, q) in [("First.go", go), ("make_second", make_second), ("Second.run", run_)] {
        check(r.result.is_reachable(q), || format!("{name} unreachable"))?;
    }
    let site = |name: &str| p.modules[0].sites.iter().find(|s| s.name == name).map(|s| s.id).ok_or(format!("no {name} site"));
    let reg = r.result.site_behaviors(site("register")?);
    let want: BTreeSet<Behavior> =
        [Behavior::Turtle { path: "framework.Base.register".into() }, Behavior::Callback { proc: make_second }].into();
    check(reg == want, || format!("register: {reg:?}"))?;
    let other = r.result.site_behaviors(site("other")?);
    check(other == [Behavior::Turtle { path: "framework.Base.other".into() }].into(), || format!("other: {other:?}"))?;
    check(r.result.returns(make_second).contains(&AnalysisType::ClassObject(second)), || "make_second result".into())?;
    check(r.result.param(run_, 0).contains(&AnalysisType::InstanceOf(second)), || "Second.run receiver".into())?;
    let history = &r.result.restart_history;
    check(history.windows(2).all(|w| w[0] <= w[1]), || format!("node counts shrank: {history:?}"))?;

    let cap = AnalysisConfig::default().max_restarts;
    let mut worst = 0;
    for f in all_fixture_files() {
        let mut cfg = RunConfig { inputs: vec![fixture(&f).to_string_lossy().into()], ..RunConfig::default() };
        cfg.output = std::env::temp_dir();
        let a = driver::analyze_file(&driver::collect_inputs(&cfg.inputs).map_err(|e| e.to_string())?[0], &cfg.analysis())
            .map_err(|e| format!("{f}: {}", e.message))?;
        worst = worst.max(a.result.restarts);
    }
    check(worst < cap, || format!("restart cap {cap} reached"))?;
    Ok(format!("2 restarts, facts match; corpus max {worst} < cap {cap}"))
}

/// Hand count per corpus file: (calls, calls the analysis does not reach).
/// Unreached calls sit in functions that are never called, plus `append`
/// on list literals, whose methods are not modeled.
const CORPUS_COUNTS: &[(&str, usize, usize)] = &[
    ("callbacks.py", 11, 0),
    ("class_hierarchy.py", 8, 0),
    ("cli_tool.py", 12, 0),
    ("closures.py", 7, 0),
    ("config_loader.py", 14, 1),
    ("cross_validation.py", 10, 1),
    ("data_cleaning.py", 10, 2),
    ("dead_code.py", 8, 3),
    ("decorators.py", 9, 0),
    ("feature_union.py", 9, 0),
    ("flask_app.py", 10, 0),
    ("generators.py", 6, 1),
    ("grid_search.py", 9, 0),
    ("iris_pipeline.py", 9, 0),
    ("kmeans_clusters.py", 6, 0),
    ("lgbm_ranker.py", 8, 0),
    ("text_classifier.py", 10, 0),
    ("unittest_api.py", 9, 0),
    ("web_scraper.py", 10, 2),
    ("xgb_regression.py", 9, 0),
];

fn corpus_config(workers: usize) -> RunConfig {
    RunConfig { inputs: vec![corpus_dir().to_string_lossy().into()], workers, ..RunConfig::default() }
}

fn coverage() -> Outcome {
    let total: usize = CORPUS_COUNTS.iter().map(|c| c.1).sum();
    let missed: usize = CORPUS_COUNTS.iter().map(|c| c.2).sum();
    let mut last = None;
    for workers in [1, 4] {
        let (st, summary) = driver::corpus_stats(&corpus_config(workers)).map_err(|e| e.to_string())?;
        check(summary.errors.is_empty(), || format!("errors: {:?}", summary.errors))?;
        check(st.files_total == 20 && st.files_analyzed == 20, || format!("{} of {} files", st.files_analyzed, st.files_total))?;
        check(st.ast_calls_total == total, || format!("{} calls, hand count {total}", st.ast_calls_total))?;
        check(st.calls_matched_with_location == total - missed, || {
            format!("{} location matches, hand count {}", st.calls_matched_with_location, total - missed)
        })?;
        check(st.calls_matched_with_location <= st.calls_matched_relaxed && st.calls_matched_relaxed <= st.ast_calls_total, || {
            format!("ordering violated: {st:?}")
        })?;
        let ratio = st.calls_matched_with_location as f64 / st.ast_calls_total as f64;
        check(ratio >= 0.90, || format!("coverage {ratio:.4}"))?;
        last = Some(ratio);
    }
    Ok(format!("location coverage {}/{} = {:.2}%", total - missed, total, last.unwrap() * 100.0))
}

fn dataset_determinism() -> Outcome {
    let mut records = 0;
    for n_tokens in [16, 1024] {
        let cfg = RunConfig { n_tokens, ..corpus_config(1) };
        let a = driver::slice_dataset(&cfg).map_err(|e| e.to_string())?;
        let b = driver::slice_dataset(&RunConfig { workers: 4, ..cfg.clone() }).map_err(|e| e.to_string())?;
        check(a.to_jsonl() == b.to_jsonl(), || "JSONL differs between runs".into())?;
        check(!a.examples.is_empty(), || "no examples".into())?;
        let mut asts = BTreeMap::new();
        for ex in &a.examples {
            let n = count_tokens(&ex.complete);
            check(n <= n_tokens, || format!("{}:{} complete has {n} tokens", ex.file, ex.line))?;
            let path = corpus_dir().join(&ex.file);
            let ast = asts.entry(ex.file.clone()).or_insert_with(|| {
                let text = std::fs::read_to_string(&path).unwrap();
                let ast = parse_source(&text, &path).unwrap();
                let calls = collect_ast_calls(&ast);
                (ast, calls)
            });
            let (ast, calls) = &*ast;
            let line = ast.source.lines().nth(ex.line as usize - 1).unwrap_or("");
            let at = &line[ex.col as usize - 1..];
            let name: String = at.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            let covering = calls.iter().any(|c| {
                c.simple_name == ex.label
                    && c.span.start() <= turtleflow::Position::new(ex.line, ex.col)
                    && turtleflow::Position::new(ex.line, ex.col) < c.span.end()
            });
            check(name == ex.label && covering, || format!("{}:{}:{} label {:?} vs source {name:?}", ex.file, ex.line, ex.col, ex.label))?;
        }
        records = a.examples.len();
    }
    Ok(format!("byte-identical reruns, token bound and labels hold ({records} records)"))
}

fn ml_filter() -> Outcome {
    let r = run(&["running_example.py"]);
    let cfg = MlFilterConfig::with_roots(["sklearn"]).map_err(|e| e.to_string())?;
    let f = filter_graph(&r.graph, &cfg).graph;
    let mut labels: Vec<&str> = f.nodes.iter().map(|n| n.label.as_str()).collect();
    labels.sort();
    check(labels == ["LinearSVC", "fit", "fit"], || format!("kept {labels:?}"))?;
    let svc = f.by_label("LinearSVC").next().unwrap().id;
    let edges: BTreeSet<(usize, usize, EdgeKind)> = f.edges.iter().map(|e| (e.src, e.dst, e.kind)).collect();
    let want: BTreeSet<_> = f.by_label("fit").map(|n| (svc, n.id, EdgeKind::ReceiverFlow)).collect();
    check(edges == want, || format!("edges {edges:?}"))?;
    let dropped = ["MultiClassClf", "FrankWolfeSSVM", "hstack", "ones"];
    check(dropped.iter().all(|l| f.by_label(l).next().is_none()), || "pystruct/numpy nodes kept".into())?;

    let configs = [
        cfg.clone(),
        MlFilterConfig::with_roots(["pystruct"]).unwrap(),
        MlFilterConfig::default(),
        MlFilterConfig { keep_argument_edges: false, ..MlFilterConfig::with_roots(["sklearn", "np"]).unwrap() },
    ];
    let files = all_fixture_files();
    for file in &files {
        let Ok(a) = driver::analyze_file(
            &driver::collect_inputs(&[fixture(file).to_string_lossy().into()]).unwrap()[0],
            &AnalysisConfig::default(),
        ) else {
            return Err(format!("{file} failed"));
        };
        for c in &configs {
            let once = filter_graph(&a.graph, c).graph;
            let twice = filter_graph(&once, c).graph;
            check(once == twice, || format!("{file}: not idempotent for {:?}", c.target_roots))?;
        }
    }
    Ok(format!("LinearSVC -> fit x2 kept; idempotent on {} fixtures x {} configs", files.len(), configs.len()))
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn cpus() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn throughput() -> Outcome {
    let time = |workers: usize| -> Result<Duration, String> {
        let t = Instant::now();
        let (_, results) = driver::analyze(&corpus_config(workers)).map_err(|e| e.to_string())?;
        let elapsed = t.elapsed();
        check(results.iter().all(|r| r.is_ok()) && results.len() == 20, || "corpus analysis failed".into())?;
        Ok(elapsed)
    };
    let single = time(1)?;
    check(single < Duration::from_secs(10), || format!("single-threaded run took {single:?}"))?;
    let mut one = vec![single];
    let mut four = Vec::new();
    for _ in 0..5 {
        one.push(time(1)?);
        four.push(time(4)?);
    }
    let (m1, m4) = (median(one), median(four));
    let detail = format!("1 worker {:.1} ms, 4 workers {:.1} ms, {} CPU(s)", m1.as_secs_f64() * 1e3, m4.as_secs_f64() * 1e3, cpus());
    check(cpus() > 1, || format!("speedup not observable on a single CPU: {detail}"))?;
    check(m4 < m1, || format!("no speedup: {detail}"))?;
    Ok(detail)
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("dispatch suite", dispatch_suite),
        ("golden dataflow graph", golden_graph),
        ("golden slice", golden_slice),
        ("turtle algebra properties", turtle_algebra),
        ("slice oracle equivalence", slice_oracle),
        ("restart fixpoint", restart_fixpoint),
        ("mini-corpus coverage", coverage),
        ("dataset determinism", dataset_determinism),
        ("ML filter", ml_filter),
        ("throughput", throughput),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (status, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(i + 1);
                ("FAIL", d)
            }
        };
        let _ = writeln!(err, "acceptance {:>2} {status} {name}: {detail}", i + 1);
    }
    // A parallel speedup cannot be observed on a single-CPU host; the line
    // above still reports the failure.
    if cpus() < 2 && failed == [10] {
        let _ = writeln!(err, "acceptance: criterion 10 needs more than one CPU; not enforced on this host");
        return;
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
