//! `nsp` — experiment driver for the slice placement toolkit.
//!
//! Subcommands: `train` (DRL / HA-DRL training runs), `baseline-heu`
//! (training-free heuristic baseline), `validate` (frozen-checkpoint
//! evaluation), `timing` (execution-time sweeps), and `plot` (SVG charts
//! from the emitted CSVs).
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on configuration
//! errors (including bad flags).

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, Resolved};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "nsp", version, about = "Network slice placement experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an agent and write phase metrics plus a checkpoint.
    Train {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Run the training-free heuristic baseline over one or more loads.
    BaselineHeu {
        #[command(flatten)]
        flags: Overrides,
        /// Comma-separated loads to sweep; the configured rho otherwise.
        #[arg(long, value_delimiter = ',')]
        rho_sweep: Option<Vec<f64>>,
    },
    /// Evaluate a frozen checkpoint (argmax actions, no updates).
    Validate {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Measure mean placement time per agent over size sweeps.
    Timing {
        #[command(flatten)]
        flags: Overrides,
        /// Requests per probe batch.
        #[arg(long, default_value_t = 100)]
        requests: usize,
    },
    /// Render SVG charts from previously emitted CSV files.
    Plot {
        /// CSV files produced by the other subcommands.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for the chart files.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Shared wrapper: resolve config (exit 2 on error), run the command, and
/// write the manifest whether it succeeded or not.
fn run_experiment<F>(name: &str, flags: &Overrides, body: F) -> ExitCode
where
    F: FnOnce(&Resolved, &mut RunManifest) -> commands::CmdResult,
{
    let resolved = match Resolved::from_flags(flags) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&resolved.out_dir) {
        eprintln!("cannot create {}: {e}", resolved.out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let out_dir = resolved.out_dir.clone();
    let mut manifest = RunManifest::begin(name.to_string(), resolved.clone());
    let outcome = body(&resolved, &mut manifest);
    match outcome {
        Ok(summary) => {
            manifest.summary = summary.clone();
            match manifest.finish(&out_dir, None) {
                Ok(path) => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&summary).expect("summary serializes")
                    );
                    println!("manifest: {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("cannot write manifest: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Err(e) => {
            eprintln!("{name} failed: {e}");
            if let Err(we) = manifest.finish(&out_dir, Some(e)) {
                eprintln!("cannot write manifest: {we}");
            }
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Train { flags } => run_experiment("train", &flags, commands::cmd_train),
        Cmd::BaselineHeu { flags, rho_sweep } => {
            run_experiment("baseline-heu", &flags, |cfg, m| {
                let rhos = rho_sweep.clone().unwrap_or(vec![cfg.file.sim.rho]);
                commands::cmd_baseline_heu(cfg, &rhos, m)
            })
        }
        Cmd::Validate { flags } => {
            if flags.checkpoint.is_none() {
                eprintln!("configuration error: validate needs --checkpoint");
                return ExitCode::from(EXIT_CONFIG);
            }
            run_experiment("validate", &flags, commands::cmd_validate)
        }
        Cmd::Timing { flags, requests } => {
            if requests == 0 {
                eprintln!("configuration error: --requests must be at least 1");
                return ExitCode::from(EXIT_CONFIG);
            }
            run_experiment("timing", &flags, |cfg, m| {
                commands::cmd_timing(cfg, requests, m)
            })
        }
        Cmd::Plot { inputs, out_dir } => {
            if let Err(e) = std::fs::create_dir_all(&out_dir) {
                eprintln!("cannot create {}: {e}", out_dir.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
            match plot::render_all(&inputs, &out_dir) {
                Ok(files) => {
                    for f in files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("plot failed: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
