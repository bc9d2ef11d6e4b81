//! Batch front end for `desorb-core`: JSON configs in, JSON/CSV out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod validate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "desorb", version, about = "Recoil diffusion and decoherence from surface desorption")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Multiplies surface resolution and quadrature orders.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub resolution_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Diffusion tensor, force/torque and total rate.
    Tensors,
    /// Localization rates for pose pairs.
    Locmap,
    /// Monte Carlo ensemble compared with the moment predictions.
    Simulate,
    /// Outgassing rate estimate.
    Outgas,
    /// Built-in oracle cross-checks.
    Validate,
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Config(format!("--out: cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let opts = commands::Options {
        seed: cli.seed,
        resolution_scale: cli.resolution_scale,
    };
    if cli.command == Command::Validate {
        let mut out = open_out(&cli.out)?;
        validate::validate(&mut out)?;
        out.flush()?;
        return Ok(());
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = config::load(path)?;
    let mut out = open_out(&cli.out)?;
    match cli.command {
        Command::Tensors => commands::tensors(&cfg, &opts, &mut out)?,
        Command::Locmap => commands::locmap(&cfg, &opts, &mut out)?,
        Command::Simulate => {
            // the report goes next to the CSV, or to stderr
            let mut report: Box<dyn Write> = match &cli.out {
                Some(p) => {
                    let mut name = p.clone().into_os_string();
                    name.push(".report.json");
                    Box::new(BufWriter::new(File::create(PathBuf::from(name))?))
                }
                None => Box::new(std::io::stderr()),
            };
            commands::simulate(&cfg, &opts, &mut out, &mut report)?;
            report.flush()?;
        }
        Command::Outgas => commands::outgas(&cfg, &mut out)?,
        Command::Validate => unreachable!(),
    }
    out.flush()?;
    Ok(())
}

/// Runs one invocation on a pool of `--threads` workers.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}
