//! `rksens` command line driver.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Options;

#[derive(Debug, Parser)]
#[command(name = "rksens", version, about = "Runge-Kutta sensitivity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct CommandArgs {
    /// JSON file with any of the option names as keys (N and T upper case)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate once and write the trajectory at step boundaries.
    #[command(after_help = "CSV columns: t,x0..x{nx-1},z0..z{nz-1}")]
    Simulate(CommandArgs),
    /// Check forward, adjoint and Hessian sensitivities against finite differences.
    #[command(
        name = "sens-check",
        after_help = "JSON keys: model,tableau,n_steps,T,points,max_rel_err_forward,adj_consistency,\
                      hess_fd_err,hess_asym,thresholds,checks,pass"
    )]
    SensCheck(CommandArgs),
    /// Richardson step-halving study against a tight reference solution.
    #[command(name = "order-study", after_help = "CSV columns: h,error,estimated_order")]
    OrderStudy(CommandArgs),
    /// Solve a tracking OCP with SQP.
    #[command(
        name = "solve-ocp",
        after_help = "JSON keys: model,transcription,hessian,tableau,n_steps,N,n_vars,n_eq,status,iters,\
                      kkt_history,repetitions,timings{total,nlp_function_eval,step_computation}\n\
                      Trajectory CSV columns: k,t,x0..x{nx-1},u0..u{nu-1}"
    )]
    SolveOcp(CommandArgs),
    /// Time per SQP iteration of the chain OCP over chain sizes.
    #[command(
        after_help = "CSV columns: n_mass,transcription,tableau,time_per_iter_s,iters,repetitions,status"
    )]
    Bench(CommandArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, exit code 2.
    Config(String),
    /// Numerical failure, exit code 1.
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<rksens::Error> for CliError {
    fn from(e: rksens::Error) -> Self {
        use rksens::Error as E;
        match e {
            E::UnknownModel(_)
            | E::InvalidArgument(_)
            | E::UnsupportedTableau { .. }
            | E::InvalidTableau { .. }
            | E::Shape { .. }
            | E::NotAllocated(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn resolve(args: CommandArgs) -> Result<Options, CliError> {
    match &args.config {
        Some(path) => Ok(args.opts.over(Options::load(path)?)),
        None => Ok(args.opts),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&resolve(a)?),
        Command::SensCheck(a) => commands::sens_check(&resolve(a)?),
        Command::OrderStudy(a) => commands::order_study(&resolve(a)?),
        Command::SolveOcp(a) => commands::solve_ocp(&resolve(a)?),
        Command::Bench(a) => commands::bench(&resolve(a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rksens: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Numerical(_) => ExitCode::from(1),
            }
        }
    }
}
