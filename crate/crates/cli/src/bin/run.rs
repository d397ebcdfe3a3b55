//! Runs a composed simulation and prints the run summary as TOML.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use mphflow::composer::SimulationManifest;
use mphflow::driver::{load_params, Simulation};

#[derive(Parser)]
#[command(version, about = "Run a simulation from an object directory")]
struct Args {
    /// Directory written by `setup`; outputs go here too.
    #[arg(long)]
    object: PathBuf,
    #[arg(long)]
    par: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    np: usize,
    /// Checkpoint to restart from.
    #[arg(long)]
    restart: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::init();
    let args = Args::parse();
    let mpath = args.object.join("simulation.manifest");
    let manifest = SimulationManifest::parse(
        &fs::read_to_string(&mpath).with_context(|| format!("reading {}", mpath.display()))?,
    )?;
    let text = fs::read_to_string(&args.par).with_context(|| format!("reading {}", args.par.display()))?;
    let params = load_params(&manifest, &text, Some(&args.par))?;
    let mut sim = Simulation::init(manifest, params, args.np)?;
    sim.set_output_dir(&args.object);
    match &args.restart {
        Some(chk) => sim.restart(chk)?,
        None => sim.write_initial_output()?,
    }
    log::info!("{} from step {} with {} workers", sim.application, sim.state.nstep, sim.workers());
    sim.evolve()?;
    let report = sim.finalize()?.to_toml();
    fs::write(args.object.join("run_report.toml"), &report)?;
    print!("{report}");
    Ok(())
}
