//! `metaprior` command-line driver.
//!
//! Exit codes: 0 ok, 1 other failure, 2 usage or config, 3 numeric
//! divergence, 4 checkpoint problems.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use metaprior::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Divergence(String),
    Checkpoint(String),
    Other(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Checkpoint(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Divergence(m) | CliError::Checkpoint(m) | CliError::Other(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Layout(_) => CliError::Usage(e.to_string()),
            Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            Error::Checkpoint(_) | Error::CheckpointVersion { .. } => CliError::Checkpoint(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "metaprior", version, about = "Meta-learned sampling priors for few-shot Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key = value config file
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override any config key, e.g. --set mc_samples=5000
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalPriors {
    /// Uniform, standard normal and the meta-learned prior
    Meta,
    /// Baselines only; no checkpoint needed
    UniformOnly,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunPrior {
    Meta,
    Uniform,
    StandardNormal,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Meta-train the network initialization and write a checkpoint
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        outer_iters: Option<usize>,
        #[arg(long)]
        checkpoint_out: Option<PathBuf>,
    },
    /// Run the k-shot benchmark and write CSV + JSON results
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "meta")]
        prior: EvalPriors,
        /// Results path prefix; writes PREFIX.csv and PREFIX.json
        #[arg(long)]
        results_out: Option<PathBuf>,
        #[arg(long, value_parser = ["pi", "ei"])]
        acquisition: Option<String>,
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Write the meta-learned prior density as x,density CSV
    EmitPrior {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a single task and write its trace and final posterior
    BoRun {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        task_mean: f64,
        #[arg(long)]
        task_std: f64,
        #[arg(long)]
        shots: usize,
        #[arg(long, value_enum, default_value = "meta")]
        prior: RunPrior,
        /// Output prefix; writes PREFIX_trace.csv, PREFIX_posterior.csv, PREFIX.json
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["pi", "ei"])]
        acquisition: Option<String>,
        #[arg(long)]
        mc_samples: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            common,
            outer_iters,
            checkpoint_out,
        } => {
            let mut cfg = commands::resolve(&common)?;
            if let Some(n) = outer_iters {
                cfg.outer_iters = n;
            }
            if let Some(p) = checkpoint_out {
                cfg.checkpoint_out = p;
            }
            commands::cmd_train(&cfg)
        }
        Command::Eval {
            common,
            checkpoint,
            prior,
            results_out,
            acquisition,
            mc_samples,
        } => {
            let mut cfg = commands::resolve(&common)?;
            if let Some(p) = checkpoint {
                cfg.checkpoint_in = Some(p);
            }
            if let Some(p) = results_out {
                cfg.results_out = p;
            }
            if let Some(a) = acquisition {
                cfg.set("acquisition", &a)?;
            }
            if let Some(n) = mc_samples {
                cfg.mc_samples = n;
            }
            commands::cmd_eval(&cfg, prior)
        }
        Command::EmitPrior { common, checkpoint, out } => {
            let cfg = commands::resolve(&common)?;
            commands::cmd_emit_prior(&cfg, &checkpoint, &out)
        }
        Command::BoRun {
            common,
            checkpoint,
            task_mean,
            task_std,
            shots,
            prior,
            out,
            acquisition,
            mc_samples,
        } => {
            let mut cfg = commands::resolve(&common)?;
            if let Some(p) = checkpoint {
                cfg.checkpoint_in = Some(p);
            }
            if let Some(a) = acquisition {
                cfg.set("acquisition", &a)?;
            }
            if let Some(n) = mc_samples {
                cfg.mc_samples = n;
            }
            commands::cmd_bo_run(
                &cfg,
                &commands::BoRunArgs {
                    task_mean,
                    task_std,
                    shots,
                    prior,
                    out,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
