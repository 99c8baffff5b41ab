//! Corpus-level commands: per-file analysis fanned out over a worker pool,
//! with all output written by the calling thread in input order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::callgraph::{self, AnalysisConfig, AnalysisResult};
use crate::dfg::{self, source_digest, DataflowGraph};
use crate::frontend::{collect_ast_calls, IrProgram};
use crate::mlfilter::{filter_graph, MlFilterConfig, DEFAULT_ROOTS};
use crate::slicer::{enumerate_candidate_leaves, make_example, CompletionExample, Sources, DEFAULT_N_TOKENS};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DriverError + '_ {
    move |source| DriverError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Dot,
}

/// Settings shared by all commands. The same keys may be given in a TOML
/// config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Files, directories (searched recursively for `*.py`) or glob patterns.
    pub inputs: Vec<String>,
    pub output: PathBuf,
    pub format: Format,
    pub n_tokens: usize,
    pub roots: Vec<String>,
    pub workers: usize,
    pub budget_secs: u64,
    pub max_restarts: u32,
    pub max_turtle_depth: usize,
    pub user_context: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            output: PathBuf::from("turtleflow-out"),
            format: Format::Json,
            n_tokens: DEFAULT_N_TOKENS,
            roots: DEFAULT_ROOTS.iter().map(|s| s.to_string()).collect(),
            workers: 1,
            budget_secs: 30,
            max_restarts: AnalysisConfig::default().max_restarts,
            max_turtle_depth: AnalysisConfig::default().max_turtle_depth,
            user_context: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, DriverError> {
        toml::from_str(text).map_err(|e| DriverError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DriverError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let positive = [
            ("n_tokens", self.n_tokens as u64),
            ("workers", self.workers as u64),
            ("budget_secs", self.budget_secs),
            ("max_restarts", self.max_restarts as u64),
            ("max_turtle_depth", self.max_turtle_depth as u64),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(DriverError::Config(format!("{k} must be positive")));
            }
        }
        Ok(())
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            user_site_context: self.user_context,
            max_restarts: self.max_restarts,
            max_turtle_depth: self.max_turtle_depth,
            time_budget: Some(Duration::from_secs(self.budget_secs)),
        }
    }

    pub fn filter(&self) -> Result<MlFilterConfig, DriverError> {
        MlFilterConfig::with_roots(self.roots.iter().cloned()).map_err(|e| DriverError::Config(e.to_string()))
    }

    /// Digest of the settings that affect output contents. Paths and the
    /// worker count are left out.
    pub fn digest(&self) -> String {
        let v = json!({
            "n_tokens": self.n_tokens,
            "roots": self.roots.iter().collect::<BTreeSet<_>>(),
            "budget_secs": self.budget_secs,
            "max_restarts": self.max_restarts,
            "max_turtle_depth": self.max_turtle_depth,
            "user_context": self.user_context,
        });
        source_digest(&v.to_string())
    }
}

/// One input file with the directory its module name is relative to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct InputFile {
    pub path: PathBuf,
    pub root: PathBuf,
}

impl InputFile {
    /// Path relative to the root, with `/` separators.
    pub fn rel(&self) -> String {
        let rel = self.path.strip_prefix(&self.root).unwrap_or(&self.path);
        rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
    }
}

fn is_py(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "py")
}

/// Expand inputs into a sorted, deduplicated file list.
pub fn collect_inputs(inputs: &[String]) -> Result<Vec<InputFile>, DriverError> {
    let mut out = BTreeSet::new();
    for input in inputs {
        let p = Path::new(input);
        if p.is_dir() {
            for entry in walkdir::WalkDir::new(p).sort_by_file_name() {
                let entry = entry.map_err(|e| DriverError::Io { path: p.to_path_buf(), source: e.into() })?;
                if entry.file_type().is_file() && is_py(entry.path()) {
                    out.insert(InputFile { path: entry.path().to_path_buf(), root: p.to_path_buf() });
                }
            }
        } else if input.contains(['*', '?', '[']) {
            let paths = glob::glob(input).map_err(|e| DriverError::Config(format!("bad pattern {input:?}: {e}")))?;
            for path in paths.flatten() {
                let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
                out.insert(InputFile { path, root });
            }
        } else {
            // Missing files are kept so they show up as per-file errors.
            let root = p.parent().map(Path::to_path_buf).unwrap_or_default();
            out.insert(InputFile { path: p.to_path_buf(), root });
        }
    }
    Ok(out.into_iter().collect())
}

/// A file taken through the whole per-file pipeline.
#[derive(Debug, Clone)]
pub struct Analyzed {
    pub input: InputFile,
    pub program: IrProgram,
    pub result: AnalysisResult,
    pub graph: DataflowGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileError {
    pub file: String,
    pub stage: String,
    pub message: String,
}

impl FileError {
    fn new(input: &InputFile, stage: &str, message: impl ToString) -> Self {
        FileError { file: input.rel(), stage: stage.to_string(), message: message.to_string() }
    }

    pub fn to_jsonl(&self) -> String {
        json!({"file": self.file, "stage": self.stage, "message": self.message}).to_string()
    }
}

pub fn analyze_file(input: &InputFile, cfg: &AnalysisConfig) -> Result<Analyzed, FileError> {
    let mut program = IrProgram::default();
    let entry = program.add_file(&input.path, Some(&input.root)).map_err(|e| FileError::new(input, "parse", e))?;
    let result = callgraph::build(&program, entry, cfg).map_err(|e| FileError::new(input, "analyze", e))?;
    let graph = dfg::build(&result, &program);
    Ok(Analyzed { input: input.clone(), program, result, graph })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, DriverError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| DriverError::Config(e.to_string()))
}

/// Run `f` on every file in the pool, returning results in input order.
pub fn fan_out<T, F>(files: &[InputFile], workers: usize, f: F) -> Result<Vec<T>, DriverError>
where
    T: Send,
    F: Fn(&InputFile) -> T + Sync,
{
    Ok(pool(workers)?.install(|| files.par_iter().map(&f).collect()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub files_total: usize,
    pub files_ok: usize,
    pub errors: Vec<FileError>,
}

impl RunSummary {
    /// Every input failed. An empty corpus is not a failure.
    pub fn total_failure(&self) -> bool {
        self.files_total > 0 && self.files_ok == 0
    }
}

fn write(path: &Path, text: &str) -> Result<(), DriverError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn write_errors(out: &Path, errors: &[FileError]) -> Result<(), DriverError> {
    let text: String = errors.iter().map(|e| e.to_jsonl() + "\n").collect();
    write(&out.join("errors.jsonl"), &text)
}

fn graph_path(out: &Path, input: &InputFile, ext: &str) -> PathBuf {
    out.join(Path::new(&input.rel()).with_extension(ext))
}

/// Per-file graphs, in input order.
pub fn analyze(cfg: &RunConfig) -> Result<(Vec<InputFile>, Vec<Result<Analyzed, FileError>>), DriverError> {
    cfg.validate()?;
    let files = collect_inputs(&cfg.inputs)?;
    let acfg = cfg.analysis();
    let results = fan_out(&files, cfg.workers, |f| analyze_file(f, &acfg))?;
    Ok((files, results))
}

fn summarize<T>(files: &[InputFile], results: &[Result<T, FileError>], extra: Vec<FileError>) -> RunSummary {
    let mut errors: Vec<FileError> = results.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    errors.extend(extra);
    RunSummary { files_total: files.len(), files_ok: results.iter().filter(|r| r.is_ok()).count(), errors }
}

/// Write `<file>.json` (and `<file>.dot` with the DOT format) per analyzed
/// file plus `errors.jsonl`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<RunSummary, DriverError> {
    let (files, results) = analyze(cfg)?;
    for a in results.iter().flatten() {
        write(&graph_path(&cfg.output, &a.input, "json"), &(a.graph.to_json() + "\n"))?;
        if cfg.format == Format::Dot {
            write(&graph_path(&cfg.output, &a.input, "dot"), &a.graph.to_dot())?;
        }
    }
    let summary = summarize(&files, &results, Vec::new());
    write_errors(&cfg.output, &summary.errors)?;
    Ok(summary)
}

/// Completion examples of one analyzed file, one per candidate leaf.
/// Leaves whose example cannot be built are reported and skipped.
pub fn file_examples(a: &Analyzed, n_tokens: usize) -> (Vec<CompletionExample>, Vec<FileError>) {
    let sources = Sources::from_program(&a.program);
    let mut examples = Vec::new();
    let mut errors = Vec::new();
    for leaf in enumerate_candidate_leaves(&a.graph) {
        match make_example(&a.graph, leaf, &sources, n_tokens) {
            Ok(mut ex) => {
                ex.file = a.input.rel();
                examples.push(ex);
            }
            Err(e) => errors.push(FileError::new(&a.input, "slice", e)),
        }
    }
    (examples, errors)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub files_total: usize,
    pub files_analyzed: usize,
    pub files_failed: usize,
    pub examples: usize,
    pub skipped: usize,
    pub n_tokens: usize,
    pub config_digest: String,
    /// Examples per file, for files with at least one.
    pub per_file: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub examples: Vec<CompletionExample>,
    pub manifest: Manifest,
    pub summary: RunSummary,
}

impl Dataset {
    pub fn to_jsonl(&self) -> String {
        self.examples.iter().map(|e| e.to_jsonl() + "\n").collect()
    }
}

pub fn slice_dataset(cfg: &RunConfig) -> Result<Dataset, DriverError> {
    cfg.validate()?;
    let files = collect_inputs(&cfg.inputs)?;
    let acfg = cfg.analysis();
    let n_tokens = cfg.n_tokens;
    let results = fan_out(&files, cfg.workers, |f| analyze_file(f, &acfg).map(|a| file_examples(&a, n_tokens)))?;
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let mut per_file = BTreeMap::new();
    for (f, r) in files.iter().zip(&results) {
        if let Ok((ex, errs)) = r {
            if !ex.is_empty() {
                per_file.insert(f.rel(), ex.len());
            }
            examples.extend(ex.iter().cloned());
            skipped.extend(errs.iter().cloned());
        }
    }
    let n_skipped = skipped.len();
    let summary = summarize(&files, &results, skipped);
    let manifest = Manifest {
        files_total: summary.files_total,
        files_analyzed: summary.files_ok,
        files_failed: summary.files_total - summary.files_ok,
        examples: examples.len(),
        skipped: n_skipped,
        n_tokens,
        config_digest: cfg.digest(),
        per_file,
    };
    Ok(Dataset { examples, manifest, summary })
}

fn unix_time() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Write `dataset.jsonl`, `manifest.json`, `manifest.meta.json` (run time
/// only) and `errors.jsonl`.
pub fn cmd_slice_dataset(cfg: &RunConfig) -> Result<RunSummary, DriverError> {
    let d = slice_dataset(cfg)?;
    write(&cfg.output.join("dataset.jsonl"), &d.to_jsonl())?;
    let manifest = serde_json::to_string_pretty(&d.manifest).expect("manifest serializes");
    write(&cfg.output.join("manifest.json"), &(manifest + "\n"))?;
    write(&cfg.output.join("manifest.meta.json"), &(json!({"created_unix": unix_time()}).to_string() + "\n"))?;
    write_errors(&cfg.output, &d.summary.errors)?;
    Ok(d.summary)
}

pub const RELAXED_MATCH_RULE: &str = "name-presence";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub files_total: usize,
    pub files_analyzed: usize,
    pub ast_calls_total: usize,
    pub calls_matched_with_location: usize,
    pub calls_matched_relaxed: usize,
    pub programs_with_candidate_slices: usize,
    pub label_counts: BTreeMap<String, usize>,
    pub relaxed_match_rule: String,
}

/// Call coverage of one file: (AST calls, location matches, relaxed matches).
/// A call matches by location when a call site the analysis resolved has
/// exactly its span, and relaxed when a resolved site has its callee name.
pub fn call_coverage(a: &Analyzed) -> (usize, usize, usize) {
    let module = a.program.module(a.result.entry);
    let mut spans = BTreeSet::new();
    let mut names = BTreeSet::new();
    for s in a.result.resolved_sites() {
        let info = a.program.site(s);
        if info.proc.module == a.result.entry && info.kind == crate::frontend::ir::SiteKind::Call {
            spans.insert(info.span.clone());
            names.insert(info.name.clone());
        }
    }
    let calls = collect_ast_calls(&module.ast);
    let mut exact = 0;
    let mut relaxed = 0;
    for c in &calls {
        let at = spans.contains(&c.span);
        exact += at as usize;
        relaxed += (at || names.contains(&c.simple_name)) as usize;
    }
    (calls.len(), exact, relaxed)
}

/// Three decimals without trailing zeros, keeping one: `0.667`, `1.0`.
fn fraction(part: usize, total: usize) -> String {
    let s = format!("{:.3}", part as f64 / total as f64);
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

impl CorpusStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    /// `label,count,cumulative_fraction`, most frequent first, ties by label.
    pub fn labels_csv(&self) -> String {
        let mut rows: Vec<(&String, &usize)> = self.label_counts.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let total: usize = rows.iter().map(|r| *r.1).sum();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "count", "cumulative_fraction"]).expect("in-memory write");
        let mut acc = 0;
        for (label, count) in rows {
            acc += count;
            w.write_record([label.as_str(), &count.to_string(), &fraction(acc, total)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

pub fn corpus_stats(cfg: &RunConfig) -> Result<(CorpusStats, RunSummary), DriverError> {
    cfg.validate()?;
    let files = collect_inputs(&cfg.inputs)?;
    let acfg = cfg.analysis();
    let n_tokens = cfg.n_tokens;
    let results = fan_out(&files, cfg.workers, |f| {
        analyze_file(f, &acfg).map(|a| (call_coverage(&a), file_examples(&a, n_tokens)))
    })?;
    let mut st = CorpusStats { files_total: files.len(), relaxed_match_rule: RELAXED_MATCH_RULE.into(), ..Default::default() };
    let mut skipped = Vec::new();
    for ((total, exact, relaxed), (examples, errs)) in results.iter().flatten() {
        st.files_analyzed += 1;
        st.ast_calls_total += total;
        st.calls_matched_with_location += exact;
        st.calls_matched_relaxed += relaxed;
        st.programs_with_candidate_slices += !examples.is_empty() as usize;
        for e in examples {
            *st.label_counts.entry(e.label.clone()).or_default() += 1;
        }
        skipped.extend(errs.iter().cloned());
    }
    let summary = summarize(&files, &results, skipped);
    Ok((st, summary))
}

/// Write `stats.json`, `labels.csv` and `errors.jsonl`.
pub fn cmd_stats(cfg: &RunConfig) -> Result<(CorpusStats, RunSummary), DriverError> {
    let (st, summary) = corpus_stats(cfg)?;
    write(&cfg.output.join("stats.json"), &(st.to_json() + "\n"))?;
    write(&cfg.output.join("labels.csv"), &st.labels_csv())?;
    write_errors(&cfg.output, &summary.errors)?;
    Ok((st, summary))
}

/// Write the filtered graph of every analyzed file.
pub fn cmd_mlgraph(cfg: &RunConfig) -> Result<RunSummary, DriverError> {
    let filter = cfg.filter()?;
    let (files, results) = analyze(cfg)?;
    for a in results.iter().flatten() {
        let f = filter_graph(&a.graph, &filter);
        write(&graph_path(&cfg.output, &a.input, "json"), &(f.to_json() + "\n"))?;
        if cfg.format == Format::Dot {
            write(&graph_path(&cfg.output, &a.input, "dot"), &f.to_dot())?;
        }
    }
    let summary = summarize(&files, &results, Vec::new());
    write_errors(&cfg.output, &summary.errors)?;
    Ok(summary)
}
