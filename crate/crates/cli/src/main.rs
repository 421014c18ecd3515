use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mblflow_cli::config::{self, RunConfig};
use mblflow_cli::run::{self, Command};
use mblflow_cli::{schema, CliError};

/// Scale-by-scale diagonalization experiments on disordered spin chains.
#[derive(Parser)]
#[command(name = "mblflow", version)]
struct Cli {
    /// Run configuration; defaults apply to every key it leaves out.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Settings that replace the config file, as `section.key=value`.
    #[arg(value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the flow on every seed and record per-scale norms.
    Flow(RunArgs),
    /// Integrals of motion, locality tails and diagonal couplings.
    LiomProfile(RunArgs),
    /// Monte-Carlo frequency of small scale-0 denominators.
    ResonanceScan(RunArgs),
    /// Factorial-weighted diagram census.
    DiagramCount(RunArgs),
    /// Heat current through bath-coupled chains of several lengths.
    TransportSweep(RunArgs),
    /// Numeric checks of the spectral lemma and the resolvent expansion.
    LemmaChecks(RunArgs),
    /// Print the CSV schema, or write SCHEMA.md into a directory.
    Schema {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: Option<&PathBuf>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    config::load(&text, overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Flow(a) => (Command::Flow, a),
        Cmd::LiomProfile(a) => (Command::LiomProfile, a),
        Cmd::ResonanceScan(a) => (Command::ResonanceScan, a),
        Cmd::DiagramCount(a) => (Command::DiagramCount, a),
        Cmd::TransportSweep(a) => (Command::TransportSweep, a),
        Cmd::LemmaChecks(a) => (Command::LemmaChecks, a),
        Cmd::Schema { out } => {
            return match out {
                None => {
                    print!("{}", schema::markdown());
                    ExitCode::SUCCESS
                }
                Some(dir) => match run::write_schema(&dir) {
                    Ok(p) => {
                        println!("{}", p.display());
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(&e),
                },
            };
        }
    };
    let result = load(cli.config.as_ref(), &args.overrides).and_then(|cfg| run::execute(command, &cfg));
    match result {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}
