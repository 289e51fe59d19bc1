use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use branchfall_cli::{config::RunConfig, execute, keys_help, report, validate, CliError, EXIT_OK, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "branchfall", version, about = "Decoherence branching and classical-limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Parent directory for the run directory, overriding `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Summarise a run directory and verify its file digests.
    Report { run_dir: PathBuf },
    /// List every config key with its default.
    Keys,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    code(e.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, output_dir, seed } => {
            let mut cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e.into()),
            };
            if let Some(d) = output_dir {
                cfg.output_dir = d.to_string_lossy().into_owned();
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            match execute(&cfg) {
                Ok(out) => {
                    let m = &out.manifest;
                    println!("{}", out.dir.display());
                    if let Some(v) = &m.verdict {
                        println!("verdict: {v}");
                    }
                    if let Some(e) = &m.error {
                        eprintln!("error: {e}");
                    }
                    code(m.exit_code)
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate { config } => match validate(&config) {
            Ok(cfg) => {
                println!("ok: {} config", cfg.kind.name());
                code(EXIT_OK)
            }
            Err(e) => fail(e),
        },
        Command::Report { run_dir } => match report(&run_dir) {
            Ok((text, intact)) => {
                print!("{text}");
                code(if intact { EXIT_OK } else { EXIT_VALIDATION })
            }
            Err(e) => fail(e),
        },
        Command::Keys => {
            print!("{}", keys_help());
            code(EXIT_OK)
        }
    }
}
