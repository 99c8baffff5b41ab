use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use turtleflow::driver::{self, DriverError, Format, RunConfig, RunSummary};

#[derive(Parser)]
#[command(name = "turtleflow", version, about = "Call graphs, dataflow graphs and completion slices for Python")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one dataflow graph per input file.
    Analyze(Opts),
    /// Write completion examples for every candidate leaf.
    SliceDataset(Opts),
    /// Write call coverage and label statistics.
    Stats(Opts),
    /// Write graphs reduced to the given ML libraries.
    Mlgraph(Opts),
}

#[derive(Args)]
struct Opts {
    /// Input files, directories or glob patterns.
    paths: Vec<String>,
    /// TOML file with the same keys as the options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    n_tokens: Option<usize>,
    /// Comma-separated library roots.
    #[arg(long, value_delimiter = ',')]
    roots: Option<Vec<String>>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    budget_secs: Option<u64>,
    #[arg(long)]
    max_restarts: Option<u32>,
    #[arg(long)]
    max_turtle_depth: Option<usize>,
    /// `site` gives user functions one context per call site.
    #[arg(long, value_parser = ["default", "site"])]
    user_context: Option<String>,
    /// Print the lowered IR of each input.
    #[arg(long)]
    dump_ir: bool,
    /// Print the call graph of each input.
    #[arg(long)]
    dump_callgraph: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Json,
    Dot,
}

impl Opts {
    fn config(&self) -> Result<RunConfig, DriverError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        c.inputs.extend(self.paths.iter().cloned());
        if let Some(o) = &self.out {
            c.output = o.clone();
        }
        if let Some(f) = self.format {
            c.format = match f {
                FormatArg::Json => Format::Json,
                FormatArg::Dot => Format::Dot,
            };
        }
        if let Some(r) = &self.roots {
            c.roots = r.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        c.n_tokens = self.n_tokens.unwrap_or(c.n_tokens);
        c.workers = self.workers.unwrap_or(c.workers);
        c.budget_secs = self.budget_secs.unwrap_or(c.budget_secs);
        c.max_restarts = self.max_restarts.unwrap_or(c.max_restarts);
        c.max_turtle_depth = self.max_turtle_depth.unwrap_or(c.max_turtle_depth);
        if let Some(u) = &self.user_context {
            c.user_context = u == "site";
        }
        c.validate()?;
        Ok(c)
    }

    fn dump(&self, c: &RunConfig) -> Result<(), DriverError> {
        if !self.dump_ir && !self.dump_callgraph {
            return Ok(());
        }
        for f in driver::collect_inputs(&c.inputs)? {
            match driver::analyze_file(&f, &c.analysis()) {
                Ok(a) => {
                    if self.dump_ir {
                        print!("{}", a.program.dump());
                    }
                    if self.dump_callgraph {
                        print!("{}", a.result.dump(&a.program));
                    }
                }
                Err(e) => eprintln!("{}: {}", e.file, e.message),
            }
        }
        Ok(())
    }
}

fn report(s: &RunSummary) -> ExitCode {
    for e in &s.errors {
        eprintln!("{} [{}]: {}", e.file, e.stage, e.message);
    }
    eprintln!("{} of {} files analyzed", s.files_ok, s.files_total);
    if s.total_failure() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode, DriverError> {
    let (opts, cmd): (&Opts, fn(&RunConfig) -> Result<RunSummary, DriverError>) = match &cli.command {
        Command::Analyze(o) => (o, driver::cmd_analyze),
        Command::SliceDataset(o) => (o, driver::cmd_slice_dataset),
        Command::Stats(o) => (o, |c| driver::cmd_stats(c).map(|(_, s)| s)),
        Command::Mlgraph(o) => (o, driver::cmd_mlgraph),
    };
    let c = opts.config()?;
    if matches!(cli.command, Command::Mlgraph(_)) {
        c.filter()?;
    }
    opts.dump(&c)?;
    Ok(report(&cmd(&c)?))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("turtleflow: {e}");
            ExitCode::from(2)
        }
    }
}
