//! `permon`: persistent monitoring trajectory optimization.
//!
//! Subcommands: `init` (visit-schedule initialization), `optimize`
//! (projected gradient descent), `validate` (Monte Carlo filter check),
//! `canonicalize` (bang/dwell restructuring of 1D policies).

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CanonicalizeArgs, ValidateArgs};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "permon",
    about = "Optimize periodic multi-agent trajectories for persistent monitoring of stochastic targets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Run configuration file (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Parameter document; when absent, `optimize` starts from `init`.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// RK4 steps per period (or horizon).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Constant descent step size.
    #[arg(long)]
    step: Option<f64>,
    /// Gradient-norm stopping threshold.
    #[arg(long)]
    eps: Option<f64>,
    /// Override the scenario mode (steady|transient).
    #[arg(long)]
    mode: Option<String>,
    /// Parameterization kind (1d|fourier).
    #[arg(long)]
    kind: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            scenario: self.scenario.clone(),
            params: self.params.clone(),
            out: self.out.clone(),
            seed: self.seed,
            grid: self.grid,
            max_iters: self.max_iters,
            step: self.step,
            eps: self.eps,
            mode: self.mode.clone(),
            kind: self.kind.clone(),
        }
    }

    fn resolve(&self) -> anyhow::Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute an initial parameter document from a visit-schedule heuristic.
    Init {
        #[command(flatten)]
        common: CommonArgs,
        /// Generations of the schedule heuristic.
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Run projected gradient descent and write the result artifacts.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo validation of the covariance dynamics.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of simulated sample paths.
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Simulation horizon (defaults to the scenario horizon or 5 periods).
        #[arg(long)]
        horizon: Option<f64>,
        /// Disable all noise (the error must vanish identically).
        #[arg(long)]
        zero_noise: bool,
    },
    /// Restructure a 1D policy into the bang/dwell form.
    Canonicalize {
        #[command(flatten)]
        common: CommonArgs,
        /// Piecewise-constant policy file (alternative to --params).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Horizon when expanding a parameter document into a policy.
        #[arg(long)]
        horizon: Option<f64>,
        /// Run the construction even over non-isolated targets.
        #[arg(long)]
        allow_non_isolated: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are not configuration errors.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = err.print();
            return ExitCode::from(code as u8);
        }
    };

    let outcome = match &cli.command {
        Command::Init { common, generations } => common.resolve().and_then(|mut cfg| {
            if let Some(g) = generations {
                cfg.init.generations = *g;
            }
            commands::cmd_init(&cfg)
        }),
        Command::Optimize { common } => common.resolve().and_then(|cfg| commands::cmd_optimize(&cfg)),
        Command::Validate {
            common,
            paths,
            horizon,
            zero_noise,
        } => common.resolve().and_then(|cfg| {
            commands::cmd_validate(
                &cfg,
                &ValidateArgs {
                    paths: *paths,
                    horizon: *horizon,
                    zero_noise: *zero_noise,
                },
            )
        }),
        Command::Canonicalize {
            common,
            policy,
            horizon,
            allow_non_isolated,
        } => common.resolve().and_then(|cfg| {
            commands::cmd_canonicalize(
                &cfg,
                &CanonicalizeArgs {
                    policy: policy.clone(),
                    horizon: *horizon,
                    allow_non_isolated: *allow_non_isolated,
                },
            )
        }),
    };

    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code_for(&err) as u8)
        }
    }
}
