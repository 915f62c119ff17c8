use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urnsa::commands::{asymptotics_cmd, oracle_cmd, simulate, validate_cmd, ExitStatus};
use urnsa::config::RunConfig;
use urnsa_core::Result;

#[derive(Parser)]
#[command(name = "urnsa", version, about = "Randomized urn designs as stochastic approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write one CSV per replication.
    Simulate(Common),
    /// Compute v*, the regime, Γ, Dh, Σ and the assumption report.
    Asymptotics(Common),
    /// Run the acceptance criteria.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Reduced replication counts and horizons with widened tolerances.
        #[arg(long)]
        quick: bool,
        /// Comma-separated subset of criteria, e.g. `1,2,8`.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
    /// Enumerate the exact law at a small horizon.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset: figure1, wei-clt, bhs-clt, regime-b, regime-c.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override simulate.horizon.
    #[arg(long)]
    horizon: Option<u64>,
    /// Override simulate.seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        self.load_or(None)
    }

    /// `fallback` names the preset used when neither flag is given.
    fn load_or(&self, fallback: Option<&str>) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match (&self.config, self.preset.as_deref().or(fallback)) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => {
                return Err(urnsa_core::Error::Config(
                    "either --config <path> or --preset <name> is required".into(),
                ))
            }
        };
        if let Some(h) = self.horizon {
            cfg.simulate.horizon = h;
            if let Some(cps) = &mut cfg.simulate.checkpoints {
                cps.retain(|&n| n <= h);
            }
        }
        if let Some(s) = self.seed {
            cfg.simulate.seed = s;
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<urnsa::Outcome> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = c.load()?;
            simulate(&cfg, &out)
        }
        Command::Asymptotics(c) => {
            let (cfg, out) = c.load()?;
            asymptotics_cmd(&cfg, &out)
        }
        Command::Validate { common, quick, criteria } => {
            // the criteria carry their own models, so no config is required
            let (mut cfg, out) = common.load_or(Some("figure1"))?;
            if !criteria.is_empty() {
                cfg.validate.criteria = criteria;
                cfg.validate()?;
            }
            validate_cmd(&cfg, &out, quick)
        }
        Command::Oracle(c) => {
            let (cfg, out) = c.load()?;
            oracle_cmd(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ExitStatus::for_error(&e).code() as u8)
        }
    }
}
