use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polarair::config::{load_config, Mode};
use polarair::report::{emit_epochs, emit_records};
use polarair::sim::run_experiment;

#[derive(Parser)]
#[command(name = "polarair", version, about = "Over-the-air federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv and epochs.csv to the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn run(cli: Cli) -> polarair::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            mode,
            seed,
            noise_std,
            epochs,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = noise_std {
                cfg.noise_std = n;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            cfg.validate()?;
            std::fs::create_dir_all(&out).map_err(|source| polarair::Error::Io {
                path: out.clone(),
                source,
            })?;
            let result = run_experiment(&cfg)?;
            emit_records(&result.rounds, &out.join("rounds.csv"))?;
            emit_epochs(&result.epochs, &out.join("epochs.csv"))?;
            if let Some(last) = result.epochs.last() {
                let uses = result.rounds.last().map_or(0, |r| r.channel_uses_cum);
                println!(
                    "{}: {} epochs, {} rounds, {} channel uses, final test accuracy {:.4}",
                    cfg.mode.as_str(),
                    result.epochs.len(),
                    result.rounds.len(),
                    uses,
                    last.test_accuracy
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
