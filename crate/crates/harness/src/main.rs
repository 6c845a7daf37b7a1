use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nupf_harness::{output_dir, run_experiment, ExperimentConfig, EXPERIMENT_IDS};

#[derive(Parser)]
#[command(name = "nupf", version, about = "Run nudged particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Output directory (default: the config's `output`, else
        /// `$NUPF_OUTPUT_DIR/<id>`, else `results/<id>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List experiment ids.
    ListExperiments,
    /// Print the default config of an experiment.
    PrintDefaultConfig { id: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> nupf_harness::Result<()> {
    match cli.command {
        Command::ListExperiments => {
            for id in EXPERIMENT_IDS {
                println!("{id}");
            }
        }
        Command::PrintDefaultConfig { id } => {
            print!("{}", ExperimentConfig::default_for(&id)?.to_toml()?);
        }
        Command::Run {
            config,
            seed,
            runs,
            out,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(t) = threads {
                cfg.threads = Some(t);
            }
            let dir = out.unwrap_or_else(|| output_dir(&cfg));
            cfg.output = Some(dir.clone());
            let result = run_experiment(&cfg)?;
            result.write(&dir)?;
            log::info!(
                "{}: {} records in {:.2}s, written to {}",
                result.id,
                result.records.len(),
                result.wall_clock_s,
                dir.display()
            );
        }
    }
    Ok(())
}
