//! Composes an application from the unit tree into an object directory,
//! copying the application's parfile and data files alongside.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use mphflow::composer::{self, APP_ROOT, CONFIG_FILE, IMPL_EXT};

/// Resolve an application and write its manifest.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Root of the unit tree.
    #[arg(long, default_value = "source")]
    source: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "object")]
    object: PathBuf,
    /// Application path followed by setup flags, e.g.
    /// `incompFlow/ChannelFlow -auto +incomp -2d -nxb=16 -nyb=16`.
    #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
    request: Vec<String>,
}

fn main() -> Result<()> {
    env_logger::init();
    let args = Args::parse();
    let manifest = composer::setup(&args.source, &args.request)?;
    fs::create_dir_all(&args.object).with_context(|| format!("creating {}", args.object.display()))?;
    let out = args.object.join("simulation.manifest");
    fs::write(&out, manifest.emit()).with_context(|| format!("writing {}", out.display()))?;
    let app_dir = args.source.join(APP_ROOT).join(&manifest.provenance.application);
    for e in fs::read_dir(&app_dir).with_context(|| format!("reading {}", app_dir.display()))? {
        let e = e?;
        let name = e.file_name().to_string_lossy().into_owned();
        if e.file_type()?.is_file() && name != CONFIG_FILE && !name.ends_with(&format!(".{IMPL_EXT}")) {
            fs::copy(e.path(), args.object.join(&name))?;
        }
    }
    println!("{}", manifest.provenance.request);
    for u in &manifest.resolved_units {
        println!("  {u}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
