//! `tad`: config-driven experiments, canned reproductions and environment
//! inspection.
//!
//! Exit codes: 0 success, 1 failed verification or I/O error, 2 invalid
//! config or environment, 3 size guard, 4 non-finite loss.

mod config;
mod run;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tad_core::constructions::{builtin_game, builtin_names};
use tad_core::envfile::to_env_json;
use tad_core::transform::size_report;
use tad_core::Error;

#[derive(Parser)]
#[command(
    name = "tad",
    version,
    about = "Exact tabular cooperative multi-agent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's replica count (seeds seed, seed+1, ...).
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Run a canned reproduction (1-4) and report pass/fail.
    Verify {
        check: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inspect built-in environments.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
    /// Inspect the sequential transform of an environment.
    Transform {
        #[command(subcommand)]
        command: TransformCommand,
    },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Print the built-in environment names.
    List,
    /// Print a built-in environment in the environment file format.
    Dump { name: String },
}

#[derive(Subcommand)]
enum TransformCommand {
    /// Print state-action counts before and after the transform.
    Report {
        /// Built-in name or environment file.
        env: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SizeGuard { .. } => 3,
        Error::NonFinite { .. } => 4,
        Error::Io(_) | Error::Singular => 1,
        _ => 2,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn run_cmd(config: &Path, seed: Option<u64>, out: &Path, replicas: Option<usize>) -> ExitCode {
    let base = config.parent().unwrap_or(Path::new("."));
    let resolved = match config::Config::load(config).and_then(|c| c.resolve(base, seed, replicas))
    {
        Ok(r) => r,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run::run(&resolved, out) {
        Ok(summaries) => {
            for s in summaries {
                println!(
                    "seed {}: return {} (optimal {}, gap {})",
                    s.seed, s.ret, s.optimal_return, s.gap
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            replicas,
        } => run_cmd(&config, seed, &out, replicas),
        Command::Verify { check, seed } => match verify::verify(check, seed) {
            Ok(report) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("serializable")
                );
                println!(
                    "{} verify {}: {}",
                    if report.pass { "PASS" } else { "FAIL" },
                    report.check,
                    report.name
                );
                if report.pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => fail(e),
        },
        Command::Env {
            command: EnvCommand::List,
        } => {
            for name in builtin_names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Env {
            command: EnvCommand::Dump { name },
        } => match builtin_game(&name) {
            Ok(m) => {
                println!("{}", to_env_json(&m));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Transform {
            command: TransformCommand::Report { env },
        } => match run::resolve_env(&env, Path::new(".")) {
            Ok(m) => {
                let r = size_report(&m);
                let report = serde_json::json!({
                    "env": env,
                    "n_states": m.n_states,
                    "n_agents": m.n_agents,
                    "n_actions": m.n_actions,
                    "original_state_actions": r.original_sa,
                    "transformed_state_actions": r.transformed_sa,
                    "within_twice_original": r.bound,
                });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("serializable")
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
