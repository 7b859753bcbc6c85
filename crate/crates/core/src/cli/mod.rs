//! Command-line harness: `simulate`, `filter` and `compare`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::pflow::Scheme;
use crate::statespace::RhoPolicy;

pub use commands::{cmd_compare, cmd_filter, cmd_simulate, rmse};
pub use config::{FilterKind, Overrides, RunConfig, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "driftbench",
    version,
    about = "Filter benchmark for the dividend-yield / real-return model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a series and its hidden states.
    Simulate(CommonArgs),
    /// Run one filter.
    Filter(CommonArgs),
    /// Run all three filters on the same series.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Falls back to the config, then DRIFTBENCH_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Observation CSV with header `year,yield,return`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub filter: Option<FilterKind>,
    #[arg(long)]
    pub w0: Option<f64>,
    #[arg(long)]
    pub sigma_count: Option<usize>,
    #[arg(long, value_name = "BOOL")]
    pub noise_injection: Option<bool>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub dlambda: Option<f64>,
    /// explicit|implicit
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long, value_name = "BOOL")]
    pub diffusion: Option<bool>,
    #[arg(long)]
    pub sigma2_scale: Option<f64>,
    /// reject|clamp
    #[arg(long)]
    pub rho_policy: Option<RhoPolicy>,
    /// Initial state for simulation, `yield,return`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub z0: Option<Vec<f64>>,
    #[arg(long)]
    pub n_steps: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Overrides> {
        let z0 = match &self.z0 {
            None => None,
            Some(v) if v.len() == 2 => Some([v[0], v[1]]),
            Some(v) => {
                return Err(crate::Error::config(
                    "z0",
                    format!("expected `yield,return`, got {} values", v.len()),
                ));
            }
        };
        Ok(Overrides {
            seed: self.seed,
            out: self.out.clone(),
            input: self.input.clone(),
            filter: self.filter,
            w0: self.w0,
            sigma_count: self.sigma_count,
            noise_injection: self.noise_injection,
            particles: self.particles,
            dlambda: self.dlambda,
            scheme: self.scheme,
            diffusion: self.diffusion,
            sigma2_scale: self.sigma2_scale,
            rho_policy: self.rho_policy,
            z0,
            n_steps: self.n_steps,
        })
    }

    pub fn settings(&self) -> Result<Settings> {
        let cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Settings::resolve(&cfg, &self.overrides()?)
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&a.settings()?).map(drop),
        Command::Filter(a) => cmd_filter(&a.settings()?).map(drop),
        Command::Compare(a) => cmd_compare(&a.settings()?).map(drop),
    }
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 success, 2 config, 3 data, 4 numerical.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
