//! Compares two checkpoint or plot files variable by variable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mphflow::io::{compare_files, Verdict};

#[derive(Parser)]
#[command(version, about = "Compare two output files; exit 0 on SUCCESS")]
struct Args {
    a: PathBuf,
    b: PathBuf,
    /// Largest accepted absolute difference.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    match compare_files(&args.a, &args.b, args.tol) {
        Ok(report) => {
            print!("{report}");
            if report.verdict == Verdict::Success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
