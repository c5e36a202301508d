//! `cubegreen` command-line tool.
//!
//! Every run prints a report `{command, config, result, timing}`. The
//! `config` object is the fully resolved argument set, so a saved report can
//! be fed back with `--config FILE` to repeat the run. `timing` is the only
//! field that changes between identical runs.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use commands::Command;
use report::Format;

#[derive(Parser, Debug)]
#[command(
    name = "cubegreen",
    version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CARGO_PKG_NAME"), ")"),
    about = "Green functions on the unit cube, extremal dependence functions, rank statistics and Monte Carlo checks",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Output format of the report.
    #[arg(long, value_enum, global = true, default_value_t = OutputArg::Json)]
    output: OutputArg,

    /// Write the report to this file instead of stdout.
    #[arg(long = "out-file", global = true)]
    out_file: Option<PathBuf>,

    /// Worker threads for parallel work. Never changes numeric output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Replay the run described by a previous JSON report (or a file with
    /// just its `command` and `config` keys).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputArg {
    Json,
    Csv,
}

/// A failure with its exit code: 2 for invalid input, 1 for I/O.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure { code: 2, kind: "invalid", message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: 1, kind: "io", message: message.into() }
    }
}

impl From<cubegreen::Error> for Failure {
    fn from(e: cubegreen::Error) -> Self {
        if e.is_io() {
            Failure::io(e.to_string())
        } else {
            Failure::invalid(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail(&Failure { code: 2, kind: "usage", message: first });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(&f),
    }
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("{}", json!({ "error": f.message, "kind": f.kind, "exit_code": f.code }));
    ExitCode::from(f.code)
}

fn load_replay(path: &PathBuf) -> Result<Command, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("config file: {e}")))?;
    let stripped = json!({ "command": doc.get("command"), "config": doc.get("config") });
    serde_json::from_value(stripped).map_err(|e| Failure::invalid(format!("config file: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let command = match (&cli.config, cli.command) {
        (Some(_), Some(_)) => return Err(Failure::invalid("--config cannot be combined with a subcommand")),
        (Some(path), None) => load_replay(path)?,
        (None, Some(c)) => c,
        (None, None) => return Err(Failure::invalid("no subcommand given; see --help")),
    };
    if cli.threads == Some(0) {
        return Err(Failure::invalid("--threads must be positive"));
    }
    let start = Instant::now();
    let (resolved, outcome) = commands::execute(command, cli.threads)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut doc = serde_json::to_value(&resolved).expect("configuration is serializable");
    doc["result"] = outcome.result;
    doc["timing"] = json!({ "seconds": seconds });
    let format = match cli.output {
        OutputArg::Json => Format::Json,
        OutputArg::Csv => Format::Csv,
    };
    let text = report::render(&doc, outcome.table.as_ref(), format);
    match &cli.out_file {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
