use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use waffle_sim::config::parse_config;
use waffle_sim::report::{compare_suite, run_and_emit};
use waffle_sim::server::Algorithm;

#[derive(Parser)]
#[command(name = "waffle-sim", version, about = "Personalized federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config, writing per-seed CSVs and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        workers: Option<usize>,
        /// Override the config's algorithm.
        #[arg(long)]
        algorithm: Option<Algorithm>,
    },
    /// Run every config in a directory as a benchmark grid.
    Suite {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn run(cli: Cli) -> waffle_sim::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            workers,
            algorithm,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            if let Some(a) = algorithm {
                cfg.algorithm.name = a;
            }
            let out = out
                .or_else(|| cfg.output_path.clone())
                .ok_or_else(|| waffle_sim::Error::config("output_path", "is required when --out is not given"))?;
            let result = run_and_emit(&cfg, &out)?;
            for row in &result.summary {
                println!(
                    "{} {}: best {:.4} ± {:.4} over {} seed(s), 95% of best by round {}",
                    row.algorithm,
                    row.distribution,
                    row.mean_best_accuracy,
                    row.std_best_accuracy,
                    row.seeds,
                    row.rounds_to_95pct_of_best
                );
            }
            println!("wrote {}", result.summary_path.display());
        }
        Command::Suite {
            dir,
            out,
            seeds,
            workers,
        } => {
            let result = compare_suite(&dir, &out, workers, seeds.as_deref())?;
            print!("{}", result.table);
            println!("wrote {}", result.summary_path.display());
        }
    }
    Ok(())
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
