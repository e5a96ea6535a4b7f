use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jumpsym::scenario::{self, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(name = "jumpsym", version, about = "Run symmetry scenarios for SDEs driven by Lie-group-valued noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a TOML file or by builtin name.
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
        /// Output root; results go to <out>/<scenario>/<timestamp>/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the builtin scenarios.
    List,
    /// Describe a scenario and print its default configuration.
    Describe { scenario: String },
}

fn load(config: &str) -> Result<ScenarioConfig, ScenarioError> {
    let path = PathBuf::from(config);
    if path.exists() {
        ScenarioConfig::from_file(&path)
    } else {
        ScenarioConfig::builtin(config)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            for s in scenario::scenarios() {
                println!("{:<22} {}", s.name, s.summary);
            }
            ExitCode::SUCCESS
        }
        Command::Describe { scenario } => match scenario::describe(&scenario) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config, seed, paths, step, out } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            cfg.seed = seed.or(cfg.seed);
            cfg.paths = paths.or(cfg.paths);
            cfg.step = step.or(cfg.step);
            cfg.output = out.or(cfg.output);
            let outcome = match scenario::run_in_memory(&cfg) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dir = match outcome.write() {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            print!("{}", outcome.summary());
            println!("results written to {}", dir.display());
            if outcome.report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
