//! Regression suite runner and benchmark approval.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mphflow::flashtest::{parse_suite, Harness};

#[derive(Parser)]
#[command(version, about = "Run regression suites against dated benchmarks")]
struct Args {
    /// Root of the unit tree.
    #[arg(long, global = true, default_value = "source")]
    source: PathBuf,
    /// Where tests run and record their outputs.
    #[arg(long, global = true, default_value = "flashtest-work")]
    work_dir: PathBuf,
    /// Benchmark store.
    #[arg(long, global = true, default_value = "benchmarks")]
    benchmark_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every entry of a suite file and print a TOML summary.
    RunSuite {
        file: PathBuf,
        /// Also write the summary here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Promote the last run of a test node to a benchmark.
    Approve {
        node: String,
        #[arg(long)]
        date: String,
    },
}

fn run(args: Args) -> Result<bool> {
    let harness = Harness::new(&args.source, &args.benchmark_dir, &args.work_dir);
    match args.cmd {
        Cmd::RunSuite { file, summary } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let entries = parse_suite(&text)?;
            let result = harness.run_suite(&entries);
            let toml = result.to_toml();
            print!("{toml}");
            if let Some(path) = summary {
                fs::write(&path, &toml).with_context(|| format!("writing {}", path.display()))?;
            }
            for t in &result.tests {
                eprintln!("{:<6} {}", t.verdict.to_string(), t.test);
            }
            Ok(result.all_passed())
        }
        Cmd::Approve { node, date } => {
            let dir = harness.approve(&node, &date)?;
            println!("approved {node} as {}", dir.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
