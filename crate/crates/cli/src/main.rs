//! Command-line driver: ingest rating logs into windowed artifacts, train
//! the belief-transition value function, evaluate against the plain
//! factorization baseline, and run the feedback-loop simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pomdp_rec_core::config::RunConfig;
use pomdp_rec_core::pipeline;
use pomdp_rec_core::Error;

#[derive(Parser)]
#[command(name = "pomdp-rec", version, about = "Belief-state recommender pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the rating log and write the windowed dataset artifact.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Override the train-window count.
        #[arg(long)]
        windows: Option<usize>,
    },
    /// Train factor models, the transition model and the Q network.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the discount factor.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Evaluate on the test windows against the factorization baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Skip the Q-guided pipeline and report the baseline alone.
        #[arg(long)]
        baseline_only: bool,
    },
    /// Run the recurrent-feedback deterioration simulation.
    SimulateRd {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut config = RunConfig::from_toml_path(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { common, windows } => {
            let mut config = load_config(&common)?;
            if let Some(count) = windows {
                config.windows.count = count;
            }
            let summary = pipeline::run_ingest(&config)?;
            println!(
                "ingested {} records ({} kept) into {} train + {} test windows",
                summary.total_records,
                summary.kept_records,
                summary.n_train_windows,
                summary.n_test_windows
            );
            println!(
                "users: {}, items: {}, artifact: {}",
                summary.n_users,
                summary.n_items,
                config.output.dir.display()
            );
        }
        Command::Train { common, gamma } => {
            let mut config = load_config(&common)?;
            if let Some(g) = gamma {
                config.qtrain.gamma = g;
            }
            let summary = pipeline::run_train(&config)?;
            println!(
                "trained {} window models on {} triples over {} iterations",
                summary.n_window_models,
                summary.n_triples,
                summary.diagnostics.iterations.len()
            );
            if let Some(last) = summary.diagnostics.iterations.last() {
                println!("final hold-out rmse: {}", last.holdout_rmse);
            }
        }
        Command::Evaluate {
            common,
            baseline_only,
        } => {
            let mut config = load_config(&common)?;
            if baseline_only {
                config.policy.baseline_only = true;
            }
            let summary = pipeline::run_evaluate(&config)?;
            println!("baseline pooled rmse: {}", summary.baseline_pooled_rmse);
            if let Some(pooled) = summary.pomdp_pooled_rmse {
                println!("pomdp-rec pooled rmse: {pooled}");
            }
            for report in &summary.baseline_reports {
                println!(
                    "window {}: baseline rmse {} over {} pairs",
                    report.window_index, report.rmse, report.n_pairs
                );
            }
        }
        Command::SimulateRd { common } => {
            let config = load_config(&common)?;
            let summary = pipeline::run_simulate(&config)?;
            for (strategy, runs) in &summary.trajectories {
                let final_median = {
                    let mut finals: Vec<f64> = runs
                        .iter()
                        .filter_map(|t| t.records.last().map(|r| r.probe_rmse))
                        .collect();
                    finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    finals.get(finals.len() / 2).copied().unwrap_or(f64::NAN)
                };
                println!(
                    "{strategy}: {} seeds, median final probe rmse {final_median}",
                    runs.len()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
