//! Command-line driver for the two-photon optics toolkit.
//!
//! One command per process; all knobs live in a sectioned `key = value`
//! config file (every key has a default, so the file is optional). Outputs
//! land in the configured directory together with a manifest and the
//! resolved configuration. Exit codes: 0 success, 2 configuration error,
//! 3 numeric-domain error, 4 I/O error.

mod commands;
mod config;
mod errors;
mod provenance;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use commands::interfere::StateArg;
use commands::reconstruct::ProfileArg;
use commands::simulate::Plane;
use commands::sweep::ModeArg;
use config::RunConfig;
use errors::{CliError, CliResult};
use provenance::{OutDir, Provenance};

#[derive(Parser)]
#[command(
    name = "biphoton",
    version,
    about = "Double-Gaussian two-photon simulation, reconstruction, and analysis",
    long_about = "Simulates transverse two-photon states end to end: closed-form metrics, \
                  synthetic photon-counting frame stacks, joint-map reconstruction and \
                  cleaning, width-ratio sweeps, and the double-slit correlation test. \
                  All parameters come from a sectioned key = value config file; every key \
                  has a default. Exit codes: 0 ok, 2 config error, 3 domain error, 4 I/O."
)]
struct Cli {
    /// Configuration file (sectioned key = value; optional).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides [run] out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// RNG seed (overrides [camera] seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form metrics and the analytic joint map at a plane.
    State {
        /// Propagation distance from the waist (mm).
        #[arg(long, value_name = "MM", default_value_t = 0.0, allow_negative_numbers = true)]
        z: f64,
    },
    /// Render a synthetic binary frame stack at a plane.
    Simulate {
        /// Propagation distance from the waist (mm).
        #[arg(long, value_name = "MM", conflicts_with = "zbar", allow_negative_numbers = true)]
        z: Option<f64>,
        /// Lens-to-camera distance (mm), folded through the configured lens.
        #[arg(long, value_name = "MM")]
        zbar: Option<f64>,
        /// Frames to render (overrides [run] frames).
        #[arg(long, value_name = "M")]
        frames: Option<usize>,
    },
    /// Estimate, clean, and fit the joint map from a frame stack.
    Reconstruct {
        /// Frame-stack file written by `simulate`.
        stack: PathBuf,
        /// Cleaning profile for the written map.
        #[arg(long, value_enum, default_value_t = ProfileArg::Propagation)]
        profile: ProfileArg,
    },
    /// Width-ratio curve over folded distances (CSV).
    Sweep {
        /// Planes in mm: `a,b,c` or `start:stop:n` (default: 30 planes
        /// spanning (f, 3f], one snapped to the balanced plane).
        #[arg(long, value_name = "MM[,MM...]")]
        zbar: Option<String>,
        /// Closed-form curve or frame-simulated reconstruction per plane.
        #[arg(long, value_enum, default_value_t = ModeArg::Analytic)]
        mode: ModeArg,
        /// Frames per plane in simulate mode (overrides [run] frames).
        #[arg(long, value_name = "M")]
        frames: Option<usize>,
    },
    /// Double-slit run: joint density, marginal product, excess map.
    Interfere {
        /// Input state: position-correlated waist or phase-transition plane.
        #[arg(long, value_enum)]
        state: StateArg,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.camera.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.display().to_string();
    }
    cfg.validate()?;

    let prov = Provenance::capture(&cfg);
    let mut out = OutDir::create(Path::new(&cfg.run.out_dir))?;

    match &cli.command {
        Command::State { z } => commands::state::run(&cfg, *z, &prov, &mut out)?,
        Command::Simulate { z, zbar, frames } => {
            let plane = match (z, zbar) {
                (Some(z), None) => Plane::Direct(*z),
                (None, Some(zbar)) => Plane::Folded(*zbar),
                (None, None) => Plane::Direct(0.0),
                (Some(_), Some(_)) => {
                    return Err(CliError::Config("pass either --z or --zbar, not both".into()))
                }
            };
            commands::simulate::run(&cfg, plane, *frames, &prov, &mut out)?;
        }
        Command::Reconstruct { stack, profile } => {
            commands::reconstruct::run(&cfg, stack, *profile, &prov, &mut out)?;
        }
        Command::Sweep { zbar, mode, frames } => {
            commands::sweep::run(&cfg, zbar.as_deref(), *mode, *frames, &prov, &mut out)?;
        }
        Command::Interfere { state } => {
            commands::interfere::run(&cfg, *state, &prov, &mut out)?;
        }
    }
    out.finish(&cfg, &prov)
}
