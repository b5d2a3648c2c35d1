use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use spsim::commands::{self, Measurement};
use spsim::config::Mode;
use spsim::output::Manifest;
use spsim::recipes;

#[derive(Parser)]
#[command(name = "spsim", version, about = "Simulate and analyse a pulsed single-photon source")]
struct Cli {
    /// Worker threads; 0 picks one per core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// INI configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated time tags (PTAG) or scan data.
    Simulate {
        /// hbt, hom, decay, detuning, polarization or spectrum.
        mode: Mode,
        #[command(flatten)]
        common: Common,
    },
    /// Analyse PTAG or CSV files and write JSON results plus CSV tables.
    Analyze {
        /// g2, hom, lifetime, dop, budget or linewidth.
        measurement: Measurement,
        /// Input files: one PTAG for g2 and lifetime (several for a detuning
        /// series), HH then HV for hom, a two-column CSV for dop and linewidth.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Laser PTAG used as the instrument response of a g2 fit.
        #[arg(long)]
        irf: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Cavity report: stopband, mode spectrum, beam waist, decay-rate curve.
    Cavity {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and analyse in one go, following the configuration's mode.
    Run {
        /// Built-in recipe name (fig2a ... fig3d) instead of --config.
        recipe: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the command recorded in a manifest and verify its checksums.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in recipe, or list them all.
    Recipe { name: Option<String> },
}

fn report(m: &Manifest, out: &std::path::Path) {
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} {}: {} files in {}", m.command, m.mode, m.outputs.len() + 1, out.display());
}

fn execute(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("thread pool")?;
    match cli.command {
        Command::Simulate { mode, common } => {
            let cfg = commands::load_config(common.config.as_deref(), None, common.seed)?;
            let out = commands::output_dir(&cfg, common.out.as_deref())?;
            report(&commands::simulate(&cfg, mode, &out)?, &out);
        }
        Command::Analyze {
            measurement,
            inputs,
            irf,
            common,
        } => {
            let cfg = commands::load_config(common.config.as_deref(), None, common.seed)?;
            let out = commands::output_dir(&cfg, common.out.as_deref())?;
            report(&commands::analyze(&cfg, measurement, &inputs, irf.as_deref(), &out)?, &out);
        }
        Command::Cavity { common } => {
            let cfg = commands::load_config(common.config.as_deref(), None, common.seed)?;
            let out = commands::output_dir(&cfg, common.out.as_deref())?;
            report(&commands::cavity(&cfg, &out)?, &out);
        }
        Command::Run { recipe, common } => {
            if recipe.is_none() && common.config.is_none() {
                anyhow::bail!("`run` needs a recipe name or --config");
            }
            let cfg = commands::load_config(common.config.as_deref(), recipe.as_deref(), common.seed)?;
            let out = commands::output_dir(&cfg, common.out.as_deref())?;
            report(&commands::run(&cfg, &out)?, &out);
        }
        Command::Rerun { manifest, out } => {
            let m = commands::rerun(&manifest, &out)?;
            report(&m, &out);
            println!("all {} outputs match the manifest", m.outputs.len());
        }
        Command::Recipe { name: None } => {
            for n in recipes::names() {
                println!("{n}");
            }
        }
        Command::Recipe { name: Some(n) } => {
            let text = recipes::recipe(&n)
                .with_context(|| format!("unknown recipe `{n}`; available: {}", recipes::names().join(", ")))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
