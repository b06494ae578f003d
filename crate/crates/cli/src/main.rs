use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use omnidyn_cli::commands::{cmd_compare, cmd_matrices, cmd_mpc, cmd_simulate};
use omnidyn_cli::scenario::{Overrides, VariantSel};
use omnidyn_cli::CliError;

#[derive(Parser)]
#[command(
    name = "omnidyn",
    version,
    about = "Three-wheel omnidirectional robot dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Parameter file (overrides the scenario's `params`).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory (overrides the scenario's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantSel>,
    /// Yaw-damping multiplier of the erroneous model.
    #[arg(long)]
    torque_scale: Option<f64>,
    /// Seed for randomized input schedules.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            params: self.params.clone(),
            out: self.out.clone(),
            variant: self.variant,
            torque_scale: self.torque_scale,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print A, B (and Ad, Bd with --dt) as JSON.
    Matrices {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value = "correct")]
        variant: VariantSel,
        #[arg(long, default_value_t = 1.0)]
        torque_scale: f64,
        /// Also discretize with this sample time, s.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Simulate a scenario and write one CSV per variant.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate both variants and write a divergence report.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop MPC tracking; --variant selects the controller model.
    Mpc {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        plant: Option<VariantSel>,
        #[arg(long, value_enum)]
        controller: Option<VariantSel>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let print_paths = |paths: Vec<PathBuf>| {
        for p in paths {
            eprintln!("wrote {}", p.display());
        }
    };
    match cli.command {
        Command::Matrices {
            params,
            variant,
            torque_scale,
            dt,
        } => print!("{}", cmd_matrices(&params, variant, torque_scale, dt)?),
        Command::Simulate { scenario, common } => {
            print_paths(cmd_simulate(&scenario, &common.overrides())?)
        }
        Command::Compare { scenario, common } => {
            print_paths(cmd_compare(&scenario, &common.overrides())?)
        }
        Command::Mpc {
            scenario,
            common,
            plant,
            controller,
        } => print_paths(cmd_mpc(&scenario, &common.overrides(), plant, controller)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
