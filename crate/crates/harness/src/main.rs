use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use obpc::control::Scheme;
use obpc::ExecMode;
use obpc_harness::commands::{cmd_reproduce, cmd_simulate, cmd_stability, cmd_sweep};
use obpc_harness::output::Flags;
use obpc_harness::scenario::{emit_scenario, load_scenario};
use obpc_harness::Failure;

#[derive(Parser)]
#[command(
    name = "obpc",
    version,
    about = "Observer-based predictive control experiments"
)]
struct Cli {
    /// Optimizer seed, overriding scenario files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Obpc,
    #[value(alias = "standard-mpc", alias = "standard_mpc")]
    Mpc,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop described by a scenario file.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run one of the built-in example setups and write plot data.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(short, long)]
        output: PathBuf,
        /// Shorter or longer run than the default (15 for example 1, 20 for example 2).
        #[arg(long)]
        span: Option<f64>,
    },
    /// Observer stability data for an example or a scenario file.
    Stability {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2), conflicts_with = "scenario", required_unless_present = "scenario")]
        example: Option<u8>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a base scenario from many initial values and certify the result.
    Sweep {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Run one scenario at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Validate a scenario file and print it with all defaults filled in.
    Check { scenario: PathBuf },
}

fn print_flags(f: &Flags) {
    println!("first_control_zero = {}", f.first_control_zero);
    match f.converged {
        Some(c) => println!("converged = {c}"),
        None => println!("converged = undetermined"),
    }
    println!("local_maxima = {}", f.local_maxima);
    println!("oscillatory = {}", f.oscillatory);
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { scenario, output } => {
            print_flags(&cmd_simulate(&scenario, &output, cli.seed)?);
        }
        Command::Reproduce {
            example,
            scheme,
            output,
            span,
        } => {
            let scheme = match scheme {
                SchemeArg::Obpc => Scheme::Obpc,
                SchemeArg::Mpc => Scheme::StandardMpc,
            };
            print_flags(&cmd_reproduce(example, scheme, &output, cli.seed, span)?);
        }
        Command::Stability {
            example,
            scenario,
            output,
        } => {
            cmd_stability(example, scenario.as_deref(), &output)?;
        }
        Command::Sweep {
            spec,
            output,
            sequential,
        } => {
            let exec = if sequential {
                ExecMode::Sequential
            } else {
                ExecMode::best_available()
            };
            let s = cmd_sweep(&spec, &output, cli.seed, exec)?;
            print!("{}", s.aggregate);
        }
        Command::Check { scenario } => {
            print!("{}", emit_scenario(&load_scenario(&scenario)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("obpc: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
