//! Renders a parfile from unit-grouped TOML against a manifest's schema.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use mphflow::composer::SimulationManifest;
use mphflow::params::generate_parfile;

#[derive(Parser)]
#[command(version, about = "Generate a parfile from TOML")]
struct Args {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    toml: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::init();
    let args = Args::parse();
    let text = fs::read_to_string(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let manifest = SimulationManifest::parse(&text)?;
    let toml = fs::read_to_string(&args.toml).with_context(|| format!("reading {}", args.toml.display()))?;
    let par = generate_parfile(&toml, &manifest.parameters)?;
    fs::write(&args.out, par).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}
